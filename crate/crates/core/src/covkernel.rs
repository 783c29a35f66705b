//! Squared-exponential covariance machinery shared by the samplers.
//!
//! Squared distances are computed once per pair of coordinate sets and
//! reused for every range parameter the chain visits; only the cheap
//! elementwise `exp(-d / phi)` is redone when `phi` moves. Every solve goes
//! through a Cholesky factor. Nothing in this module forms an explicit
//! inverse.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SvcError};

/// Diagonal increments tried in order until the factorization succeeds.
pub const DEFAULT_JITTER: [f64; 3] = [1e-8, 1e-6, 1e-4];

/// Tolerance on `|m_ij - m_ji|`, relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-10;

/// Planar coordinates, one row per location.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordMatrix(Vec<[f64; 2]>);

impl CoordMatrix {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(SvcError::InvalidInput(format!(
                "coordinate row {i} is not finite: {:?}",
                points[i]
            )));
        }
        Ok(CoordMatrix(points))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn row(&self, i: usize) -> [f64; 2] {
        self.0[i]
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> CoordMatrix {
        CoordMatrix(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// Pairwise squared Euclidean distances, `rows(a) x rows(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqDistMatrix(DMatrix<f64>);

impl SqDistMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Squared-exponential correlations `exp(-d / phi)` for one range value.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    matrix: DMatrix<f64>,
    phi: f64,
}

impl CorrMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Lower Cholesky factor of `M + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Diagonal increment that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |L L^T|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L^{-1} v`.
    pub fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), v.len(), "whiten")?;
        let mut out = v.clone();
        self.lower.solve_lower_triangular_mut(&mut out);
        Ok(out)
    }

    /// `v^T (L L^T)^{-1} v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.whiten(v)?.norm_squared())
    }

    /// `L v`.
    pub fn lower_mul(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), v.len(), "lower_mul")?;
        Ok(&self.lower * v)
    }
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(SvcError::DimensionMismatch(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Squared distances between every row of `a` and every row of `b`.
pub fn squared_distance_matrix(a: &CoordMatrix, b: &CoordMatrix) -> Result<SqDistMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(SvcError::InvalidInput(
            "squared_distance_matrix needs non-empty coordinate sets".into(),
        ));
    }
    let out = DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let p = a.0[i];
        let q = b.0[j];
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        dx * dx + dy * dy
    });
    Ok(SqDistMatrix(out))
}

/// `exp(-d_ij / phi)` elementwise. Zero distance maps to exactly 1.
pub fn kernel_matrix(d: &SqDistMatrix, phi: f64) -> Result<CorrMatrix> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(SvcError::Domain(format!(
            "range parameter must be positive and finite, got {phi}"
        )));
    }
    let inv = 1.0 / phi;
    Ok(CorrMatrix {
        matrix: d.0.map(|v| (-v * inv).exp()),
        phi,
    })
}

/// Factors `m + jitter * I`, trying each jitter in `schedule` in turn.
///
/// Only the lower triangle of `m` is read by the factorization, but the
/// input is checked for symmetry first.
pub fn cholesky_spd(m: &DMatrix<f64>, schedule: &[f64]) -> Result<CholFactor> {
    if !m.is_square() {
        return Err(SvcError::DimensionMismatch(format!(
            "cholesky_spd needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if schedule.is_empty() {
        return Err(SvcError::Config("empty jitter schedule".into()));
    }
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(SvcError::InvalidInput(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    for &jitter in schedule {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            let lower = chol.unpack();
            if lower.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok(CholFactor { lower, jitter });
            }
        }
    }
    Err(SvcError::SingularCovariance {
        what: "matrix".into(),
        max_jitter: schedule.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Solves `(L L^T) X = rhs` with two triangular solves.
pub fn solve_spd(f: &CholFactor, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != f.dim() {
        return Err(SvcError::DimensionMismatch(format!(
            "solve_spd: factor is {}x{}, rhs has {} rows",
            f.dim(),
            f.dim(),
            rhs.nrows()
        )));
    }
    let mut x = rhs.clone();
    f.lower.solve_lower_triangular_mut(&mut x);
    f.lower.tr_solve_lower_triangular_mut(&mut x);
    Ok(x)
}

/// Vector form of [`solve_spd`].
pub fn solve_spd_vec(f: &CholFactor, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(f.dim(), rhs.len(), "solve_spd")?;
    let mut x = rhs.clone();
    f.lower.solve_lower_triangular_mut(&mut x);
    f.lower.tr_solve_lower_triangular_mut(&mut x);
    Ok(x)
}

/// Vector of i.i.d. standard normals.
pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `mean + L z` with `z` i.i.d. standard normal.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov_factor: &CholFactor,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_len(cov_factor.dim(), mean.len(), "mvn_sample")?;
    let z = standard_normal_vec(mean.len(), rng);
    Ok(mean + &cov_factor.lower * z)
}

/// Log density of `N(0, L L^T)` at `w`.
pub fn mvn_logdensity_zero_mean(w: &DVector<f64>, cov_factor: &CholFactor) -> Result<f64> {
    mvn_logdensity_scaled(w, cov_factor, 1.0)
}

/// Log density of `N(0, variance * L L^T)` at `w`.
///
/// The Gibbs sampler keeps factors of correlation matrices and carries the
/// spatial variance separately, so this is the form it evaluates.
pub fn mvn_logdensity_scaled(w: &DVector<f64>, cov_factor: &CholFactor, variance: f64) -> Result<f64> {
    let n = w.len() as f64;
    let quad = cov_factor.quad_form(w)?;
    Ok(-0.5 * n * (2.0 * PI * variance).ln() - 0.5 * cov_factor.log_det() - 0.5 * quad / variance)
}
