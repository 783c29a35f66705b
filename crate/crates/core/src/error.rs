use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SvcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SvcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance for {what} is not positive definite after jitter up to {max_jitter:e}")]
    SingularCovariance { what: String, max_jitter: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("knot selection produced no usable knots: {0}")]
    EmptyKnots(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("iteration {iteration}, coefficient {coefficient}: {source}")]
    Chain {
        iteration: usize,
        coefficient: usize,
        #[source]
        source: Box<SvcError>,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<SvcError>,
    },
}

impl SvcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SvcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        SvcError::Csv {
            path: path.into(),
            source,
        }
    }
}
