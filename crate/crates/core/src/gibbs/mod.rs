//! Gibbs sampler for the spatially varying coefficient model.
//!
//! Each coefficient surface `w_r` carries a zero-mean Gaussian process prior
//! with covariance `sigmasq_r * exp(-d^2 / phi_r)`. Under the subset GP the
//! chain samples `w_r` only at the `m` knots and recovers the full surface by
//! kriging, `w~_r = c(phi_r) K*(phi_r)^{-1} w*_r`. All dense factorizations
//! per iteration are therefore `m x m`.
//!
//! One sweep, for every `r` in order: range `phi_r` (adaptive Metropolis),
//! knot values `w*_r`, spatial variance `sigmasq_r`. Then the `p` surfaces are
//! interpolated to all locations and the nugget `tausq` is drawn.

mod chain;
mod updates;

pub use chain::{run_chain, run_chain_full_gp, ChainDiagnostics, PosteriorSamples};
pub use updates::{
    interpolate_w, phi_log_accept_ratio, update_phi, update_phi_with_step, update_sigmasq,
    update_tausq, update_w, w_conditional_moments, PhiUpdate, SurfaceInterpolator,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::covkernel::{
    cholesky_spd, kernel_matrix, squared_distance_matrix, CholFactor, SqDistMatrix, DEFAULT_JITTER,
};
use crate::error::{Result, SvcError};
use crate::knots::KnotSet;
use crate::ram::{BoundedParam, RamState, DEFAULT_DECAY, DEFAULT_PROPOSAL_SD, DEFAULT_TARGET_ACCEPT};

/// Inverse-gamma distribution with density proportional to
/// `x^(-shape-1) exp(-rate / x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl Default for InvGamma {
    fn default() -> Self {
        InvGamma {
            shape: 0.001,
            rate: 0.001,
        }
    }
}

impl InvGamma {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        let ig = InvGamma { shape, rate };
        ig.validate("inverse-gamma")?;
        Ok(ig)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite()) {
            return Err(SvcError::Config(format!(
                "{what} prior needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }

    /// Mean `rate / (shape - 1)`, defined for `shape > 1`.
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let gamma = Gamma::new(self.shape, 1.0 / self.rate)
            .map_err(|e| SvcError::Domain(format!("inverse-gamma({}, {}): {e}", self.shape, self.rate)))?;
        let g: f64 = gamma.sample(rng);
        // A gamma draw can underflow to zero for tiny shapes.
        Ok(1.0 / g.max(f64::MIN_POSITIVE))
    }
}

/// Hyperparameters: inverse-gamma priors on each `sigmasq_r` and on `tausq`,
/// uniform bounds on each `phi_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub sigmasq: Vec<InvGamma>,
    pub tausq: InvGamma,
    pub phi_bounds: Vec<(f64, f64)>,
}

impl PriorSpec {
    /// Default Inv.Gamma(0.001, 0.001) priors with the given range bounds.
    pub fn with_bounds(phi_lower: &[f64], phi_upper: &[f64]) -> Result<Self> {
        if phi_lower.len() != phi_upper.len() {
            return Err(SvcError::Config(format!(
                "{} lower bounds but {} upper bounds",
                phi_lower.len(),
                phi_upper.len()
            )));
        }
        let spec = PriorSpec {
            sigmasq: vec![InvGamma::default(); phi_lower.len()],
            tausq: InvGamma::default(),
            phi_bounds: phi_lower.iter().copied().zip(phi_upper.iter().copied()).collect(),
        };
        spec.validate(phi_lower.len())?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.phi_bounds.len()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.sigmasq.len() != p || self.phi_bounds.len() != p {
            return Err(SvcError::Config(format!(
                "priors given for {} / {} coefficients, data has {p}",
                self.sigmasq.len(),
                self.phi_bounds.len()
            )));
        }
        for (r, ig) in self.sigmasq.iter().enumerate() {
            ig.validate(&format!("sigmasq[{r}]"))?;
        }
        self.tausq.validate("tausq")?;
        for (r, &(l, u)) in self.phi_bounds.iter().enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(SvcError::Config(format!("phi[{r}] bounds ({l}, {u}) need lower < upper")));
            }
        }
        Ok(())
    }
}

/// Starting values. `None` picks the defaults: `sigmasq = 1`, `phi` at the
/// midpoint of its bounds, `w* = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StartValues {
    pub tausq: f64,
    pub sigmasq: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
    pub w_knots: Option<Vec<DVector<f64>>>,
}

impl Default for StartValues {
    fn default() -> Self {
        StartValues {
            tausq: 1.0,
            sigmasq: None,
            phi: None,
            w_knots: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th iteration (0-based iteration index divisible by it).
    pub thin: usize,
    pub seed: u64,
    pub start: StartValues,
    /// Starting proposal sd per coefficient; `None` means 1 for each.
    pub proposal_sd: Option<Vec<f64>>,
    pub target_accept: f64,
    pub adapt_decay: f64,
    /// Stop RAM adaptation once burn-in is over.
    pub freeze_adaptation: bool,
    /// Keep every interpolated surface draw (`iterations x n x p` values).
    pub store_surfaces: bool,
    pub jitter: Vec<f64>,
}

impl RunConfig {
    pub fn new(iterations: usize) -> Self {
        RunConfig {
            iterations,
            burn_in: 0,
            thin: 1,
            seed: 0,
            start: StartValues::default(),
            proposal_sd: None,
            target_accept: DEFAULT_TARGET_ACCEPT,
            adapt_decay: DEFAULT_DECAY,
            freeze_adaptation: false,
            store_surfaces: false,
            jitter: DEFAULT_JITTER.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(SvcError::Config("iteration count must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(SvcError::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(SvcError::Config("thinning stride must be at least 1".into()));
        }
        if !(self.start.tausq > 0.0) {
            return Err(SvcError::Config("starting tausq must be positive".into()));
        }
        if self.jitter.is_empty() {
            return Err(SvcError::Config("jitter schedule is empty".into()));
        }
        Ok(())
    }
}

/// Jittered knot correlation matrix `K*(phi) + jitter I` and its factor.
#[derive(Debug, Clone)]
pub struct KnotCov {
    corr: DMatrix<f64>,
    factor: CholFactor,
}

impl KnotCov {
    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }
}

/// Knot data with its cached squared-distance matrix.
#[derive(Debug)]
pub struct KnotModel<'a> {
    knots: &'a KnotSet,
    sqdist: SqDistMatrix,
    priors: &'a PriorSpec,
    jitter: Vec<f64>,
}

impl<'a> KnotModel<'a> {
    pub fn new(knots: &'a KnotSet, priors: &'a PriorSpec, jitter: &[f64]) -> Result<Self> {
        if knots.p() != priors.p() {
            return Err(SvcError::DimensionMismatch(format!(
                "knots have {} covariates, priors cover {}",
                knots.p(),
                priors.p()
            )));
        }
        Ok(KnotModel {
            knots,
            sqdist: squared_distance_matrix(knots.coords(), knots.coords())?,
            priors,
            jitter: jitter.to_vec(),
        })
    }

    pub fn knots(&self) -> &KnotSet {
        self.knots
    }

    pub fn priors(&self) -> &PriorSpec {
        self.priors
    }

    pub fn m(&self) -> usize {
        self.knots.m()
    }

    pub fn p(&self) -> usize {
        self.knots.p()
    }

    /// Builds and factors `K*(phi)`; `r` only labels the error.
    pub fn knot_cov(&self, r: usize, phi: f64) -> Result<KnotCov> {
        let k = kernel_matrix(&self.sqdist, phi)?.into_matrix();
        let factor = cholesky_spd(&k, &self.jitter).map_err(|e| match e {
            SvcError::SingularCovariance { max_jitter, .. } => SvcError::SingularCovariance {
                what: format!("K*(phi[{r}] = {phi})"),
                max_jitter,
            },
            other => other,
        })?;
        let mut corr = k;
        for i in 0..corr.nrows() {
            corr[(i, i)] += factor.jitter();
        }
        Ok(KnotCov { corr, factor })
    }
}

/// Current value of every sampled quantity.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub w_knots: Vec<DVector<f64>>,
    pub phi: Vec<BoundedParam>,
    pub sigmasq: Vec<f64>,
    pub tausq: f64,
    pub ram: Vec<RamState>,
    knot_cov: Vec<KnotCov>,
}

impl ChainState {
    pub fn initialize(model: &KnotModel<'_>, config: &RunConfig) -> Result<Self> {
        let p = model.p();
        let m = model.m();
        let bounds = &model.priors().phi_bounds;
        let phi = match &config.start.phi {
            Some(v) => {
                check_len(v.len(), p, "starting phi")?;
                v.iter()
                    .zip(bounds)
                    .map(|(&x, &(l, u))| BoundedParam::new(x, l, u))
                    .collect::<Result<Vec<_>>>()?
            }
            None => bounds
                .iter()
                .map(|&(l, u)| BoundedParam::midpoint(l, u))
                .collect::<Result<Vec<_>>>()?,
        };
        let sigmasq = match &config.start.sigmasq {
            Some(v) => {
                check_len(v.len(), p, "starting sigmasq")?;
                if v.iter().any(|s| !(*s > 0.0)) {
                    return Err(SvcError::Config("starting sigmasq must be positive".into()));
                }
                v.clone()
            }
            None => vec![1.0; p],
        };
        let w_knots = match &config.start.w_knots {
            Some(v) => {
                check_len(v.len(), p, "starting w")?;
                for w in v {
                    check_len(w.len(), m, "starting w length")?;
                }
                v.clone()
            }
            None => vec![DVector::zeros(m); p],
        };
        let sds = match &config.proposal_sd {
            Some(v) => {
                check_len(v.len(), p, "proposal sd")?;
                v.clone()
            }
            None => vec![DEFAULT_PROPOSAL_SD; p],
        };
        let ram = sds
            .iter()
            .map(|&sd| RamState::new(sd, config.target_accept, config.adapt_decay))
            .collect::<Result<Vec<_>>>()?;
        let knot_cov = phi
            .iter()
            .enumerate()
            .map(|(r, ph)| model.knot_cov(r, ph.value()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainState {
            w_knots,
            phi,
            sigmasq,
            tausq: config.start.tausq,
            ram,
            knot_cov,
        })
    }

    pub fn knot_cov(&self, r: usize) -> &KnotCov {
        &self.knot_cov[r]
    }

    /// Commits a range update, swapping in the proposal's factor on acceptance.
    pub fn apply_phi(&mut self, r: usize, update: PhiUpdate) {
        self.ram[r] = update.ram;
        if update.accepted {
            self.phi[r] = update.param;
            if let Some(cov) = update.cov {
                self.knot_cov[r] = cov;
            }
        }
    }
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<()> {
    if got != expected {
        return Err(SvcError::Config(format!("{what}: expected {expected} values, got {got}")));
    }
    Ok(())
}
