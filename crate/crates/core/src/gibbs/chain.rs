use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::updates::{interpolate_w, update_phi, update_sigmasq, update_tausq, update_w, SurfaceInterpolator};
use super::{ChainState, KnotModel, PriorSpec, RunConfig};
use crate::dataio::Dataset;
use crate::error::{Result, SvcError};
use crate::knots::KnotSet;

/// Bookkeeping collected while the chain runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    /// Dense `m x m` factorizations performed, including initialization.
    pub knot_factorizations: usize,
    /// Range proposals rejected because their covariance did not factor.
    pub proposal_failures: Vec<usize>,
    /// Largest jitter any accepted knot covariance needed.
    pub max_jitter: f64,
}

/// Stored draws. Row `s` of every per-iteration table corresponds to
/// iteration `iterations[s]` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    pub total_iterations: usize,
    pub burn_in: usize,
    pub iterations: Vec<usize>,
    pub phi: Vec<Vec<f64>>,
    pub phi_acceptance: Vec<Vec<u8>>,
    pub sigmasq: Vec<Vec<f64>>,
    pub tausq: Vec<f64>,
    /// `m x p` knot values per stored iteration.
    pub w_knots: Vec<DMatrix<f64>>,
    /// `n x p` interpolated surfaces per stored iteration, when requested.
    pub w_surfaces: Option<Vec<DMatrix<f64>>>,
    /// Pointwise posterior mean of the surfaces over iterations `>= burn_in`.
    pub surface_mean: DMatrix<f64>,
    /// Pointwise posterior variance, same iterations.
    pub surface_var: DMatrix<f64>,
    pub diagnostics: ChainDiagnostics,
}

impl PosteriorSamples {
    pub fn stored(&self) -> usize {
        self.iterations.len()
    }
}

enum Surfaces<'a> {
    Interpolated(&'a SurfaceInterpolator),
    /// Knots are the data locations, in order.
    AtKnots,
}

/// Runs the subset-GP Gibbs sampler.
///
/// `w*`, `phi` and `sigmasq` are updated from knot data only; `tausq` sees
/// all `n` locations through the interpolated surfaces.
pub fn run_chain(
    data: &Dataset,
    knots: &KnotSet,
    priors: &PriorSpec,
    config: &RunConfig,
) -> Result<PosteriorSamples> {
    if !knots.is_complete() {
        return Err(SvcError::Config(
            "knot data must be complete; drop incomplete knots first".into(),
        ));
    }
    if knots.p() != data.p() {
        return Err(SvcError::DimensionMismatch(format!(
            "knots have {} covariates, data has {}",
            knots.p(),
            data.p()
        )));
    }
    let interp = SurfaceInterpolator::new(knots.coords(), data.coords())?;
    drive(data, knots, Surfaces::Interpolated(&interp), priors, config)
}

/// Full-GP chain: every location is a knot and no interpolation step runs.
///
/// Only practical for a few hundred locations. Serves as the reference the
/// subset path must reproduce when its knots are all locations.
pub fn run_chain_full_gp(data: &Dataset, priors: &PriorSpec, config: &RunConfig) -> Result<PosteriorSamples> {
    if !data.is_complete() {
        return Err(SvcError::Config("the full-GP path needs complete data".into()));
    }
    let knots = KnotSet::from_dataset(data);
    drive(data, &knots, Surfaces::AtKnots, priors, config)
}

fn at(iteration: usize, coefficient: usize) -> impl FnOnce(SvcError) -> SvcError {
    move |e| SvcError::Chain {
        iteration,
        coefficient,
        source: Box::new(e),
    }
}

fn drive(
    data: &Dataset,
    knots: &KnotSet,
    surfaces_mode: Surfaces<'_>,
    priors: &PriorSpec,
    config: &RunConfig,
) -> Result<PosteriorSamples> {
    config.validate()?;
    priors.validate(data.p())?;
    let (n, p) = (data.n(), data.p());
    let m = knots.m();

    let model = KnotModel::new(knots, priors, &config.jitter)?;
    let mut state = ChainState::initialize(&model, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut diag = ChainDiagnostics {
        knot_factorizations: p,
        proposal_failures: vec![0; p],
        max_jitter: (0..p).map(|r| state.knot_cov(r).factor().jitter()).fold(0.0, f64::max),
    };

    let stored = config.iterations.div_ceil(config.thin);
    let mut out = PosteriorSamples {
        n,
        m,
        p,
        seed: config.seed,
        total_iterations: config.iterations,
        burn_in: config.burn_in,
        iterations: Vec::with_capacity(stored),
        phi: Vec::with_capacity(stored),
        phi_acceptance: Vec::with_capacity(stored),
        sigmasq: Vec::with_capacity(stored),
        tausq: Vec::with_capacity(stored),
        w_knots: Vec::with_capacity(stored),
        w_surfaces: config.store_surfaces.then(|| Vec::with_capacity(stored)),
        surface_mean: DMatrix::zeros(n, p),
        surface_var: DMatrix::zeros(n, p),
        diagnostics: ChainDiagnostics::default(),
    };
    let mut surface_m2 = DMatrix::<f64>::zeros(n, p);
    let mut averaged = 0usize;

    let mut surfaces = DMatrix::<f64>::zeros(n, p);
    let mut accepted = vec![0u8; p];
    for t in 0..config.iterations {
        let adapt = !(config.freeze_adaptation && t >= config.burn_in);
        for r in 0..p {
            let upd = update_phi(r, &state, &model, adapt, &mut rng).map_err(at(t, r))?;
            diag.knot_factorizations += 1;
            if upd.proposal_failed {
                diag.proposal_failures[r] += 1;
            }
            if upd.accepted {
                if let Some(cov) = &upd.cov {
                    diag.max_jitter = diag.max_jitter.max(cov.factor().jitter());
                }
            }
            accepted[r] = upd.accepted as u8;
            state.apply_phi(r, upd);

            state.w_knots[r] = update_w(r, &state, &model, &mut rng).map_err(at(t, r))?;
            diag.knot_factorizations += 1;
            state.sigmasq[r] = update_sigmasq(r, &state, &model, &mut rng).map_err(at(t, r))?;
        }

        match surfaces_mode {
            Surfaces::Interpolated(interp) => {
                for r in 0..p {
                    let w = interpolate_w(r, &state, interp).map_err(at(t, r))?;
                    surfaces.set_column(r, &w);
                }
            }
            Surfaces::AtKnots => {
                for r in 0..p {
                    surfaces.set_column(r, &state.w_knots[r]);
                }
            }
        }
        state.tausq = update_tausq(data, &surfaces, &priors.tausq, &mut rng).map_err(at(t, 0))?;

        if t >= config.burn_in {
            averaged += 1;
            let k = averaged as f64;
            for (idx, &x) in surfaces.iter().enumerate() {
                let delta = x - out.surface_mean[idx];
                out.surface_mean[idx] += delta / k;
                surface_m2[idx] += delta * (x - out.surface_mean[idx]);
            }
        }

        if t % config.thin == 0 {
            out.iterations.push(t);
            out.phi.push(state.phi.iter().map(|ph| ph.value()).collect());
            out.phi_acceptance.push(accepted.clone());
            out.sigmasq.push(state.sigmasq.clone());
            out.tausq.push(state.tausq);
            let mut wk = DMatrix::zeros(m, p);
            for r in 0..p {
                wk.set_column(r, &state.w_knots[r]);
            }
            out.w_knots.push(wk);
            if let Some(all) = out.w_surfaces.as_mut() {
                all.push(surfaces.clone());
            }
        }
    }

    if averaged > 1 {
        out.surface_var = surface_m2 / (averaged - 1) as f64;
    }
    out.diagnostics = diag;
    Ok(out)
}
