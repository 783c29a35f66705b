//! Data ingestion, sample persistence, posterior summaries and prediction.

mod csvio;
mod predict;
mod samples;
mod summary;

pub(crate) use csvio::write_csv_table;
pub(crate) use samples::read_surface_columns;
pub use csvio::{load_csv_dataset, write_dataset_csv, write_knots_csv, ColumnSpec, LoadReport};
pub use predict::{predict_response, write_predictions, Prediction};
pub use samples::{
    read_samples, read_surface_means, write_samples, write_surface_summary, Manifest, ManifestEntry,
};
pub use summary::{quantile_sorted, summarize, write_summary, ParamSummary, SummaryTable};

use nalgebra::{DMatrix, DVector};

use crate::covkernel::CoordMatrix;
use crate::error::{Result, SvcError};

/// Missing entries are stored as NaN.
pub const MISSING: f64 = f64::NAN;

pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Response, covariates and coordinates for `n` locations.
///
/// `response` and `covariates` may contain missing (NaN) entries;
/// coordinates may not.
#[derive(Debug, Clone)]
pub struct Dataset {
    response: DVector<f64>,
    covariates: DMatrix<f64>,
    coords: CoordMatrix,
    response_name: String,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(response: DVector<f64>, covariates: DMatrix<f64>, coords: CoordMatrix) -> Result<Self> {
        let names = (1..=covariates.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::with_names(response, covariates, coords, "response".into(), names)
    }

    pub fn with_names(
        response: DVector<f64>,
        covariates: DMatrix<f64>,
        coords: CoordMatrix,
        response_name: String,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(SvcError::InvalidInput("dataset has no locations".into()));
        }
        if response.len() != n || covariates.nrows() != n {
            return Err(SvcError::DimensionMismatch(format!(
                "response has {} rows, covariates {}, coordinates {n}",
                response.len(),
                covariates.nrows()
            )));
        }
        if covariates.ncols() == 0 {
            return Err(SvcError::InvalidInput("at least one covariate column is required".into()));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(SvcError::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        Ok(Dataset {
            response,
            covariates,
            coords,
            response_name,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn coords(&self) -> &CoordMatrix {
        &self.coords
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates_complete(&self, i: usize) -> bool {
        self.covariates.row(i).iter().all(|v| !is_missing(*v))
    }

    /// Response and every covariate present at row `i`.
    pub fn row_complete(&self, i: usize) -> bool {
        !is_missing(self.response[i]) && self.covariates_complete(i)
    }

    pub fn is_complete(&self) -> bool {
        (0..self.n()).all(|i| self.row_complete(i))
    }

    pub fn missing_response_count(&self) -> usize {
        self.response.iter().filter(|v| is_missing(**v)).count()
    }

    pub fn missing_covariate_count(&self) -> usize {
        self.covariates.iter().filter(|v| is_missing(**v)).count()
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let response = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.response[i]));
        let covariates = self.covariates.select_rows(indices);
        Dataset {
            response,
            covariates,
            coords: self.coords.select(indices),
            response_name: self.response_name.clone(),
            covariate_names: self.covariate_names.clone(),
        }
    }
}
