use std::path::Path;

use nalgebra::DMatrix;

use super::csvio::{fmt_value, write_csv_table};
use super::{is_missing, Dataset};
use crate::error::{Result, SvcError};

/// Fitted response per location; `None` where a covariate is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<Option<f64>>,
}

impl Prediction {
    pub fn predicted_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.values.len() - self.predicted_count()
    }
}

/// `Y^(s) = sum_r X_r(s) w_r(s)` from posterior-mean surfaces (`n x p`).
///
/// Locations with a missing response are still predicted.
pub fn predict_response(mean_w: &DMatrix<f64>, data: &Dataset) -> Result<Prediction> {
    if mean_w.nrows() != data.n() || mean_w.ncols() != data.p() {
        return Err(SvcError::DimensionMismatch(format!(
            "surfaces are {}x{}, data is {}x{}",
            mean_w.nrows(),
            mean_w.ncols(),
            data.n(),
            data.p()
        )));
    }
    let x = data.covariates();
    let values = (0..data.n())
        .map(|i| {
            if !data.covariates_complete(i) {
                return None;
            }
            let v: f64 = (0..data.p()).map(|r| x[(i, r)] * mean_w[(i, r)]).sum();
            (!is_missing(v)).then_some(v)
        })
        .collect();
    Ok(Prediction { values })
}

/// `location_index,x,y,observed,predicted` with `NA` for missing.
pub fn write_predictions(path: &Path, data: &Dataset, prediction: &Prediction) -> Result<()> {
    if prediction.values.len() != data.n() {
        return Err(SvcError::DimensionMismatch(format!(
            "{} predictions for {} locations",
            prediction.values.len(),
            data.n()
        )));
    }
    let header: Vec<String> = ["location_index", "x", "y", "observed", "predicted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = (0..data.n()).map(|i| {
        let pt = data.coords().row(i);
        vec![
            i.to_string(),
            fmt_value(pt[0], "NA"),
            fmt_value(pt[1], "NA"),
            fmt_value(data.response()[i], "NA"),
            prediction.values[i].map_or("NA".into(), |v| fmt_value(v, "NA")),
        ]
    });
    write_csv_table(path, &header, rows)
}
