//! Knot selection for the subset Gaussian process.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::covkernel::CoordMatrix;
use crate::dataio::{is_missing, Dataset};
use crate::error::{Result, SvcError};

/// Response, covariates and coordinates at the `m` knot locations.
///
/// A freshly selected set may still carry missing entries; run
/// [`filter_complete`] before handing it to the sampler.
#[derive(Debug, Clone)]
pub struct KnotSet {
    response: DVector<f64>,
    covariates: DMatrix<f64>,
    coords: CoordMatrix,
}

impl KnotSet {
    pub fn new(response: DVector<f64>, covariates: DMatrix<f64>, coords: CoordMatrix) -> Result<Self> {
        let m = coords.len();
        if m == 0 {
            return Err(SvcError::EmptyKnots("knot set has no rows".into()));
        }
        if response.len() != m || covariates.nrows() != m {
            return Err(SvcError::DimensionMismatch(format!(
                "knot response has {} rows, covariates {}, coordinates {m}",
                response.len(),
                covariates.nrows()
            )));
        }
        Ok(KnotSet {
            response,
            covariates,
            coords,
        })
    }

    /// Every location of `data` becomes a knot.
    pub fn from_dataset(data: &Dataset) -> KnotSet {
        KnotSet {
            response: data.response().clone(),
            covariates: data.covariates().clone(),
            coords: data.coords().clone(),
        }
    }

    pub fn m(&self) -> usize {
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

    fn row_complete(&self, i: usize) -> bool {
        !is_missing(self.response[i]) && self.covariates.row(i).iter().all(|v| !is_missing(*v))
    }

    pub fn is_complete(&self) -> bool {
        (0..self.m()).all(|i| self.row_complete(i))
    }

    fn select_rows(&self, rows: &[usize]) -> KnotSet {
        KnotSet {
            response: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.response[i])),
            covariates: self.covariates.select_rows(rows),
            coords: self.coords.select(rows),
        }
    }
}

fn key(v: f64) -> u64 {
    // -0.0 and 0.0 are the same coordinate.
    (v + 0.0).to_bits()
}

fn thinned_axis(values: impl Iterator<Item = f64>, k: usize, axis: &str) -> Result<HashSet<u64>> {
    let mut distinct: Vec<f64> = values.collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| key(*a) == key(*b));
    if k > distinct.len() {
        return Err(SvcError::EmptyKnots(format!(
            "k = {k} exceeds the {} distinct {axis} values",
            distinct.len()
        )));
    }
    Ok(distinct.into_iter().step_by(k).map(key).collect())
}

/// Thins each coordinate axis to every `k`-th distinct sorted value and
/// keeps the locations whose x and y both survive.
///
/// Rows come out in their original order. When several rows share a
/// location, only the first is kept.
pub fn simpleknots(data: &Dataset, k: usize) -> Result<KnotSet> {
    if k == 0 {
        return Err(SvcError::Config("k must be at least 1".into()));
    }
    let pts = data.coords().points();
    let keep_x = thinned_axis(pts.iter().map(|p| p[0]), k, "x")?;
    let keep_y = thinned_axis(pts.iter().map(|p| p[1]), k, "y")?;

    let mut seen = HashSet::new();
    let rows: Vec<usize> = pts
        .iter()
        .enumerate()
        .filter(|(_, p)| keep_x.contains(&key(p[0])) && keep_y.contains(&key(p[1])))
        .filter(|(_, p)| seen.insert((key(p[0]), key(p[1]))))
        .map(|(i, _)| i)
        .collect();
    if rows.len() < 2 {
        return Err(SvcError::EmptyKnots(format!(
            "k = {k} leaves {} knot(s); at least 2 are needed",
            rows.len()
        )));
    }
    let subset = data.select_rows(&rows);
    KnotSet::new(
        subset.response().clone(),
        subset.covariates().clone(),
        subset.coords().clone(),
    )
}

/// Drops knots with a missing response or covariate. Returns the surviving
/// set and the number of rows removed.
pub fn filter_complete(candidate: &KnotSet) -> Result<(KnotSet, usize)> {
    let rows: Vec<usize> = (0..candidate.m()).filter(|&i| candidate.row_complete(i)).collect();
    if rows.is_empty() {
        return Err(SvcError::EmptyKnots("every candidate knot has missing data".into()));
    }
    let removed = candidate.m() - rows.len();
    Ok((candidate.select_rows(&rows), removed))
}
