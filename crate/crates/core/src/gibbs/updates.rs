use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{ChainState, InvGamma, KnotCov, KnotModel};
use crate::covkernel::{
    cholesky_spd, mvn_logdensity_scaled, solve_spd, solve_spd_vec, squared_distance_matrix,
    standard_normal_vec, CholFactor, CoordMatrix, SqDistMatrix,
};
use crate::dataio::Dataset;
use crate::error::{Result, SvcError};
use crate::ram::{self, BoundedParam, RamState};

/// `B = I + A C* A` has eigenvalues >= 1; jitter is a last resort.
const PRECISION_JITTER: [f64; 3] = [0.0, 1e-10, 1e-8];

/// Outcome of one Metropolis step for `phi_r`.
#[derive(Debug, Clone)]
pub struct PhiUpdate {
    pub param: BoundedParam,
    pub accepted: bool,
    pub accept_prob: f64,
    pub ram: RamState,
    /// Factor of the proposal's covariance, present when it factored.
    pub cov: Option<KnotCov>,
    pub proposal_failed: bool,
}

/// Log acceptance ratio for moving `phi` from `current` to `proposal` with
/// `w*` and `sigmasq` held fixed. The uniform prior cancels.
pub fn phi_log_accept_ratio(
    w: &DVector<f64>,
    sigmasq: f64,
    current: &BoundedParam,
    current_factor: &CholFactor,
    proposal: &BoundedParam,
    proposal_factor: &CholFactor,
) -> Result<f64> {
    let lp_new = mvn_logdensity_scaled(w, proposal_factor, sigmasq)?;
    let lp_old = mvn_logdensity_scaled(w, current_factor, sigmasq)?;
    Ok(lp_new - lp_old + ram::log_jacobian(current, proposal)?)
}

/// Random-walk Metropolis update of `phi_r` on the logit axis.
pub fn update_phi<R: Rng + ?Sized>(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
    adapt: bool,
    rng: &mut R,
) -> Result<PhiUpdate> {
    let (proposal, _) = ram::propose(&state.phi[r], &state.ram[r], rng)?;
    evaluate_phi(r, state, model, proposal, adapt, rng)
}

/// As [`update_phi`] with the unbounded-axis step fixed to `step`.
pub fn update_phi_with_step<R: Rng + ?Sized>(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
    step: f64,
    adapt: bool,
    rng: &mut R,
) -> Result<PhiUpdate> {
    let proposal = ram::shift(&state.phi[r], step)?;
    evaluate_phi(r, state, model, proposal, adapt, rng)
}

fn evaluate_phi<R: Rng + ?Sized>(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
    proposal: BoundedParam,
    adapt: bool,
    rng: &mut R,
) -> Result<PhiUpdate> {
    let current = state.phi[r];
    let (accepted, accept_prob, cov, failed) = match model.knot_cov(r, proposal.value()) {
        Ok(cov) => {
            let log_alpha = phi_log_accept_ratio(
                &state.w_knots[r],
                state.sigmasq[r],
                &current,
                state.knot_cov[r].factor(),
                &proposal,
                cov.factor(),
            )?;
            let (acc, prob) = ram::metropolis_decision(log_alpha, rng);
            (acc, prob, Some(cov), false)
        }
        Err(SvcError::SingularCovariance { what, .. }) => {
            log::debug!("rejecting phi proposal: {what} did not factor");
            (false, 0.0, None, true)
        }
        Err(e) => return Err(e),
    };
    let ram = if adapt {
        state.ram[r].adapt(accept_prob)
    } else {
        state.ram[r]
    };
    Ok(PhiUpdate {
        param: proposal,
        accepted,
        accept_prob,
        ram,
        cov,
        proposal_failed: failed,
    })
}

/// Pieces shared by the `w*_r` draw and its closed-form moments.
///
/// With `a = X_r / tau` and `y = (Y - sum_{j != r} X_j w*_j) / tau`, the knot
/// values see `y = A w + e`, `e ~ N(0, I)`, under the prior `w ~ N(0, C*)`.
struct WConditional {
    a: DVector<f64>,
    y: DVector<f64>,
    /// `C* = sigmasq (K* + jitter I)`.
    cov: DMatrix<f64>,
    /// Factor of `B = I + A C* A`.
    b_factor: CholFactor,
}

fn w_conditional(r: usize, state: &ChainState, model: &KnotModel<'_>) -> Result<WConditional> {
    let knots = model.knots();
    let x = knots.covariates();
    let m = model.m();
    let tau = state.tausq.sqrt();

    let mut y = knots.response().clone();
    for (j, wj) in state.w_knots.iter().enumerate() {
        if j != r {
            for i in 0..m {
                y[i] -= x[(i, j)] * wj[i];
            }
        }
    }
    y /= tau;
    let a = DVector::from_fn(m, |i, _| x[(i, r)] / tau);

    let cov = state.knot_cov[r].corr() * state.sigmasq[r];
    let b = DMatrix::from_fn(m, m, |i, j| {
        let v = a[i] * cov[(i, j)] * a[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    let b_factor = cholesky_spd(&b, &PRECISION_JITTER).map_err(|e| match e {
        SvcError::SingularCovariance { max_jitter, .. } => SvcError::SingularCovariance {
            what: format!("w*[{r}] posterior precision"),
            max_jitter,
        },
        other => other,
    })?;
    Ok(WConditional { a, y, cov, b_factor })
}

/// Mean and covariance of `w*_r` given everything else:
/// `Sigma1 = (C*^{-1} + diag(X_r^2) / tau)^{-1}`,
/// `mu1 = Sigma1 (X_r . Y~) / tau`, evaluated as
/// `Sigma1 = C* - C* A B^{-1} A C*` and `mu1 = C* A B^{-1} y`.
pub fn w_conditional_moments(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let wc = w_conditional(r, state, model)?;
    let ac = DMatrix::from_fn(wc.cov.nrows(), wc.cov.ncols(), |i, j| wc.a[i] * wc.cov[(i, j)]);
    let g = solve_spd(&wc.b_factor, &ac)?;
    let sigma = &wc.cov - ac.transpose() * g;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let v = solve_spd_vec(&wc.b_factor, &wc.y)?;
    let mu = ac.transpose() * v;
    Ok((mu, sigma))
}

/// Draws `w*_r` from its full conditional by pathwise conditioning:
/// `f ~ N(0, C*)`, `e ~ N(0, I)`, `w = f + C* A B^{-1} (y - A f - e)`.
///
/// Works when some (or all) `X_r` are zero; then the draw reduces to the
/// prior.
pub fn update_w<R: Rng + ?Sized>(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let wc = w_conditional(r, state, model)?;
    let m = model.m();
    let z = standard_normal_vec(m, rng);
    let f = state.knot_cov[r].factor().lower_mul(&z)? * state.sigmasq[r].sqrt();
    let e = standard_normal_vec(m, rng);
    let resid = &wc.y - wc.a.component_mul(&f) - e;
    let v = solve_spd_vec(&wc.b_factor, &resid)?;
    Ok(f + &wc.cov * wc.a.component_mul(&v))
}

/// Draws `sigmasq_r ~ Inv.Gamma(alpha + m/2, beta + w*' K*^{-1} w* / 2)`.
pub fn update_sigmasq<R: Rng + ?Sized>(
    r: usize,
    state: &ChainState,
    model: &KnotModel<'_>,
    rng: &mut R,
) -> Result<f64> {
    let prior = model.priors().sigmasq[r];
    let w = &state.w_knots[r];
    let quad = state.knot_cov[r].factor().quad_form(w)?;
    InvGamma {
        shape: prior.shape + 0.5 * w.len() as f64,
        rate: prior.rate + 0.5 * quad,
    }
    .sample(rng)
}

/// Residual sum of squares over rows with a response and all covariates.
pub(crate) fn residual_ss(data: &Dataset, surfaces: &DMatrix<f64>) -> Result<(usize, f64)> {
    if surfaces.nrows() != data.n() || surfaces.ncols() != data.p() {
        return Err(SvcError::DimensionMismatch(format!(
            "surfaces are {}x{}, data is {}x{}",
            surfaces.nrows(),
            surfaces.ncols(),
            data.n(),
            data.p()
        )));
    }
    let x = data.covariates();
    let y = data.response();
    let mut count = 0;
    let mut rss = 0.0;
    for i in 0..data.n() {
        if !data.row_complete(i) {
            continue;
        }
        let mut fit = 0.0;
        for r in 0..data.p() {
            fit += x[(i, r)] * surfaces[(i, r)];
        }
        let e = y[i] - fit;
        rss += e * e;
        count += 1;
    }
    Ok((count, rss))
}

/// Draws `tausq ~ Inv.Gamma(alpha + n/2, beta + RSS/2)` with the residuals
/// taken against the interpolated surfaces (`n x p`).
pub fn update_tausq<R: Rng + ?Sized>(
    data: &Dataset,
    surfaces: &DMatrix<f64>,
    prior: &InvGamma,
    rng: &mut R,
) -> Result<f64> {
    let (count, rss) = residual_ss(data, surfaces)?;
    if count == 0 {
        return Err(SvcError::Config(
            "no location has both a response and complete covariates".into(),
        ));
    }
    InvGamma {
        shape: prior.shape + 0.5 * count as f64,
        rate: prior.rate + 0.5 * rss,
    }
    .sample(rng)
}

/// Kriging from knots to arbitrary locations.
///
/// Holds the knot-to-location squared distances, computed once. A location
/// that coincides with a knot takes that knot's value directly.
#[derive(Debug, Clone)]
pub struct SurfaceInterpolator {
    /// `m x n`: column `i` holds distances from location `i` to every knot.
    cross: SqDistMatrix,
    pinned: Vec<Option<usize>>,
}

impl SurfaceInterpolator {
    pub fn new(knot_coords: &CoordMatrix, coords: &CoordMatrix) -> Result<Self> {
        let cross = squared_distance_matrix(knot_coords, coords)?;
        let pinned = (0..coords.len())
            .map(|i| (0..knot_coords.len()).find(|&j| cross.matrix()[(j, i)] == 0.0))
            .collect();
        Ok(SurfaceInterpolator { cross, pinned })
    }

    pub fn m(&self) -> usize {
        self.cross.nrows()
    }

    pub fn n(&self) -> usize {
        self.cross.ncols()
    }

    /// Number of locations that coincide with a knot.
    pub fn pinned_count(&self) -> usize {
        self.pinned.iter().filter(|p| p.is_some()).count()
    }

    /// `c(phi) K*^{-1} w*`, with `c_ij = exp(-|s_i - s*_j|^2 / phi)`.
    ///
    /// The spatial variance multiplies both `c` and `K*` and cancels.
    pub fn interpolate(&self, w_knots: &DVector<f64>, phi: f64, factor: &CholFactor) -> Result<DVector<f64>> {
        if w_knots.len() != self.m() || factor.dim() != self.m() {
            return Err(SvcError::DimensionMismatch(format!(
                "interpolating from {} knots with {} values and a {}x{} factor",
                self.m(),
                w_knots.len(),
                factor.dim(),
                factor.dim()
            )));
        }
        if !(phi > 0.0) {
            return Err(SvcError::Domain(format!("range parameter must be positive, got {phi}")));
        }
        if self.pinned.iter().all(|p| p.is_some()) {
            return Ok(DVector::from_iterator(
                self.n(),
                self.pinned.iter().map(|p| w_knots[p.unwrap()]),
            ));
        }
        let alpha = solve_spd_vec(factor, w_knots)?;
        let inv = 1.0 / phi;
        let d = self.cross.matrix();
        Ok(DVector::from_fn(self.n(), |i, _| match self.pinned[i] {
            Some(j) => w_knots[j],
            None => d
                .column(i)
                .iter()
                .zip(alpha.iter())
                .map(|(dij, aj)| (-dij * inv).exp() * aj)
                .sum(),
        }))
    }
}

/// Interpolated surface `w~_r` at the interpolator's locations.
pub fn interpolate_w(r: usize, state: &ChainState, interp: &SurfaceInterpolator) -> Result<DVector<f64>> {
    interp.interpolate(&state.w_knots[r], state.phi[r].value(), state.knot_cov[r].factor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{PriorSpec, RunConfig};
    use crate::knots::KnotSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coords(points: &[[f64; 2]]) -> CoordMatrix {
        CoordMatrix::new(points.to_vec()).unwrap()
    }

    fn single_knot(y: f64, x: f64) -> KnotSet {
        KnotSet::new(
            DVector::from_vec(vec![y]),
            DMatrix::from_element(1, 1, x),
            coords(&[[0.0, 0.0]]),
        )
        .unwrap()
    }

    fn config_no_jitter() -> RunConfig {
        let mut c = RunConfig::new(10);
        c.jitter = vec![0.0];
        c
    }

    #[test]
    fn scalar_conjugate_w_draws() {
        let knots = single_knot(2.0, 1.0);
        let priors = PriorSpec::with_bounds(&[0.1], &[10.0]).unwrap();
        let cfg = config_no_jitter();
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();

        let (mu, sigma) = w_conditional_moments(0, &state, &model).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-14);
        assert!((sigma[(0, 0)] - 0.5).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| update_w(0, &state, &model, &mut rng).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 0.5).abs() < 0.02, "var {var}");
    }

    #[test]
    fn zero_covariate_gives_prior() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.5]];
        let knots = KnotSet::new(
            DVector::from_vec(vec![5.0, -3.0, 2.0]),
            DMatrix::zeros(3, 1),
            coords(&pts),
        )
        .unwrap();
        let priors = PriorSpec::with_bounds(&[0.1], &[3.9]).unwrap();
        let cfg = RunConfig::new(10);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let (mu, sigma) = w_conditional_moments(0, &state, &model).unwrap();
        assert!(mu.amax() < 1e-15);
        assert!((sigma - state.knot_cov(0).corr()).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let mut acc = DMatrix::zeros(3, 3);
        for _ in 0..n {
            let w = update_w(0, &state, &model, &mut rng).unwrap();
            acc += &w * w.transpose();
        }
        acc /= n as f64;
        assert!((acc - state.knot_cov(0).corr()).amax() < 0.05);
    }

    #[test]
    fn forced_zero_step_always_accepts() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
        let knots = KnotSet::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_element(4, 1, 1.0),
            coords(&pts),
        )
        .unwrap();
        let priors = PriorSpec::with_bounds(&[0.001], &[500.0]).unwrap();
        let mut cfg = RunConfig::new(10);
        cfg.start.w_knots = Some(vec![DVector::from_vec(vec![0.3, -1.0, 0.5, 2.0])]);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = update_phi_with_step(0, &state, &model, 0.0, true, &mut rng).unwrap();
            assert!(u.accepted);
            assert_eq!(u.accept_prob, 1.0);
            assert_eq!(u.param, state.phi[0]);
        }
    }

    #[test]
    fn two_knot_ratio_matches_determinants() {
        let pts = [[0.0, 0.0], [1.0, 0.5]];
        let knots = KnotSet::new(DVector::zeros(2), DMatrix::from_element(2, 1, 1.0), coords(&pts)).unwrap();
        let priors = PriorSpec::with_bounds(&[0.01], &[20.0]).unwrap();
        let cfg = config_no_jitter();
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let cur = BoundedParam::new(3.0, 0.01, 20.0).unwrap();
        let prop = BoundedParam::new(1.2, 0.01, 20.0).unwrap();
        let f_cur = model.knot_cov(0, 3.0).unwrap();
        let f_prop = model.knot_cov(0, 1.2).unwrap();
        let w = DVector::zeros(2);
        let ours = phi_log_accept_ratio(&w, 1.7, &cur, f_cur.factor(), &prop, f_prop.factor()).unwrap();

        let d2: f64 = 1.0 + 0.25;
        let det = |phi: f64| 1.0 - (-d2 / phi).exp().powi(2);
        let span = |v: f64| (v - 0.01) * (20.0 - v);
        let hand = (det(1.2).powf(-0.5) / det(3.0).powf(-0.5) * span(1.2) / span(3.0)).ln();
        assert!((ours - hand).abs() < 1e-10, "{ours} vs {hand}");
    }

    #[test]
    fn singular_proposal_is_rejected() {
        // Two coincident knots make K* singular without jitter.
        let pts = [[0.0, 0.0], [0.0, 0.0]];
        let knots = KnotSet::new(DVector::zeros(2), DMatrix::from_element(2, 1, 1.0), coords(&pts)).unwrap();
        let priors = PriorSpec::with_bounds(&[0.1], &[10.0]).unwrap();
        let mut cfg = RunConfig::new(10);
        cfg.jitter = vec![1e-8];
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let strict = KnotModel::new(&knots, &priors, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = update_phi(0, &state, &strict, true, &mut rng).unwrap();
        assert!(u.proposal_failed);
        assert!(!u.accepted);
        assert!(u.ram.proposal_sd() < state.ram[0].proposal_sd());
    }

    #[test]
    fn sigmasq_zero_w_moments() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let knots = KnotSet::new(DVector::zeros(4), DMatrix::from_element(4, 1, 1.0), coords(&pts)).unwrap();
        let priors = PriorSpec::with_bounds(&[0.1], &[10.0]).unwrap();
        let cfg = RunConfig::new(10);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mean = (0..n).map(|_| update_sigmasq(0, &state, &model, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let expected = 0.001 / (0.001 + 2.0 - 1.0);
        assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn sigmasq_single_knot_moments() {
        let knots = single_knot(0.0, 1.0);
        let mut priors = PriorSpec::with_bounds(&[0.1], &[10.0]).unwrap();
        priors.sigmasq[0] = InvGamma::new(3.0, 1.0).unwrap();
        let mut cfg = config_no_jitter();
        cfg.start.w_knots = Some(vec![DVector::from_vec(vec![2.0])]);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000;
        let mean = (0..n).map(|_| update_sigmasq(0, &state, &model, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // Inv.Gamma(3.5, 3): mean 3 / 2.5
        let expected = (1.0 + 2.0) / (3.0 + 0.5 - 1.0);
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn quadratic_form_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pts: Vec<[f64; 2]> = (0..8)
            .map(|_| [rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)])
            .collect();
        let knots = KnotSet::new(DVector::zeros(8), DMatrix::from_element(8, 1, 1.0), coords(&pts)).unwrap();
        let priors = PriorSpec::with_bounds(&[0.1], &[3.0]).unwrap();
        let cfg = RunConfig::new(10);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let cov = model.knot_cov(0, 1.0).unwrap();
        let w = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let dense = (w.transpose() * cov.corr().clone().try_inverse().unwrap() * &w)[0];
        let ours = cov.factor().quad_form(&w).unwrap();
        assert!((dense - ours).abs() < 1e-9 * dense.abs().max(1.0));
    }

    fn tiny_dataset(y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            DVector::from_vec(y),
            DMatrix::from_element(n, 1, 1.0),
            coords(&(0..n).map(|i| [i as f64, 0.0]).collect::<Vec<_>>()),
        )
        .unwrap()
    }

    #[test]
    fn tausq_perfect_fit_and_unit_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 100_000;
        let data = tiny_dataset(vec![3.0, 4.0]);
        let surf = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let prior = InvGamma::new(3.0, 1.0).unwrap();
        let mean = (0..n).map(|_| update_tausq(&data, &surf, &prior, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // Inv.Gamma(4, 1)
        assert!((mean / (1.0 / 3.0) - 1.0).abs() < 0.05, "{mean}");

        let surf = DMatrix::from_column_slice(2, 1, &[2.0, 3.0]);
        let mean = (0..n).map(|_| update_tausq(&data, &surf, &prior, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // Inv.Gamma(4, 2)
        assert!((mean / (2.0 / 3.0) - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn tausq_skips_missing_and_errors_when_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = tiny_dataset(vec![1.0, f64::NAN]);
        let surf = DMatrix::from_column_slice(2, 1, &[0.0, 100.0]);
        let (count, rss) = residual_ss(&data, &surf).unwrap();
        assert_eq!((count, rss), (1, 1.0));
        let empty = tiny_dataset(vec![f64::NAN, f64::NAN]);
        assert!(matches!(
            update_tausq(&empty, &surf, &InvGamma::default(), &mut rng),
            Err(SvcError::Config(_))
        ));
    }

    #[test]
    fn interpolation_single_knot() {
        let knots = coords(&[[0.0, 0.0]]);
        let query = coords(&[[1.0, 1.0]]);
        let interp = SurfaceInterpolator::new(&knots, &query).unwrap();
        let f = cholesky_spd(&DMatrix::identity(1, 1), &[0.0]).unwrap();
        let out = interp.interpolate(&DVector::from_vec(vec![3.0]), 2.0, &f).unwrap();
        assert!((out[0] - 3.0 * (-1.0f64).exp()).abs() < 1e-14);
        assert!((out[0] - 1.10364).abs() < 1e-5);
    }

    #[test]
    fn interpolation_identity_at_knots() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let knots = KnotSet::new(DVector::zeros(4), DMatrix::from_element(4, 1, 1.0), coords(&pts)).unwrap();
        let priors = PriorSpec::with_bounds(&[0.1], &[3.0]).unwrap();
        let mut cfg = RunConfig::new(10);
        cfg.start.w_knots = Some(vec![DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0])]);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        let interp = SurfaceInterpolator::new(knots.coords(), knots.coords()).unwrap();
        assert_eq!(interp.pinned_count(), 4);
        assert_eq!(interpolate_w(0, &state, &interp).unwrap(), state.w_knots[0]);
    }

    #[test]
    fn interpolation_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let kp: Vec<[f64; 2]> = (0..5)
            .map(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
            .collect();
        let qp: Vec<[f64; 2]> = (0..12)
            .map(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
            .collect();
        let phi = 1.5;
        let w = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
        let kc = coords(&kp);
        let qc = coords(&qp);
        let kk = DMatrix::from_fn(5, 5, |i, j| {
            let d: f64 = (kp[i][0] - kp[j][0]).powi(2) + (kp[i][1] - kp[j][1]).powi(2);
            (-d / phi).exp()
        });
        let c = DMatrix::from_fn(12, 5, |i, j| {
            let d: f64 = (qp[i][0] - kp[j][0]).powi(2) + (qp[i][1] - kp[j][1]).powi(2);
            (-d / phi).exp()
        });
        let sigmasq = 2.3;
        let dense = (&c * sigmasq) * (kk.clone() * sigmasq).try_inverse().unwrap() * &w;

        let f = cholesky_spd(&kk, &[0.0]).unwrap();
        let interp = SurfaceInterpolator::new(&kc, &qc).unwrap();
        let ours = interp.interpolate(&w, phi, &f).unwrap();
        assert!((ours - dense).amax() < 1e-8);
    }

    #[test]
    fn interpolation_dimension_checks() {
        let interp = SurfaceInterpolator::new(&coords(&[[0.0, 0.0], [1.0, 0.0]]), &coords(&[[0.5, 0.5]])).unwrap();
        let f = cholesky_spd(&DMatrix::identity(2, 2), &[0.0]).unwrap();
        assert!(interp.interpolate(&DVector::zeros(3), 1.0, &f).is_err());
        assert!(interp.interpolate(&DVector::zeros(2), 0.0, &f).is_err());
    }
}
