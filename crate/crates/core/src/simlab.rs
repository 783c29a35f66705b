//! Simulation lab: synthetic SVC data on a regular grid, bias/RMSE of the
//! posterior-mean surfaces, a deliberately naive dense posterior used to
//! cross-check the sampler, and full-vs-subset timing.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::covkernel::{
    cholesky_spd, kernel_matrix, squared_distance_matrix, standard_normal_vec, CoordMatrix, DEFAULT_JITTER,
};
use crate::dataio::{read_surface_columns, write_csv_table, Dataset};
use crate::error::{Result, SvcError};
use crate::gibbs::{run_chain, run_chain_full_gp, PriorSpec, RunConfig};
use crate::knots::{filter_complete, simpleknots, KnotSet};

/// Largest `n` for which dense generation is attempted.
pub const MAX_DENSE_LOCATIONS: usize = 2000;

/// Oracle inputs are capped so explicit inversion stays well inside
/// double precision.
pub const MAX_ORACLE_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    /// Locations form a `side x side` grid.
    pub side: usize,
    /// Grid spacing; coordinates run over `[0, (side - 1) * spacing]`.
    pub spacing: f64,
    pub sigmasq: Vec<f64>,
    pub phi: Vec<f64>,
    pub tausq: f64,
    /// Constant mean of each true coefficient surface.
    pub means: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// `simpleknots` thinning used by [`run_experiment`].
    pub k: usize,
    /// Uniform prior bounds for every `phi_r` when fitting.
    pub phi_bounds: (f64, f64),
}

impl Default for SimDesign {
    /// 21 x 21 grid with spacing 0.5, three coefficients with means
    /// (0, 10, -5), `sigmasq = 1`, `phi = 2`, `tausq = 1e-4`.
    fn default() -> Self {
        SimDesign {
            side: 21,
            spacing: 0.5,
            sigmasq: vec![1.0; 3],
            phi: vec![2.0; 3],
            tausq: 1e-4,
            means: vec![0.0, 10.0, -5.0],
            replications: 20,
            seed: 20250101,
            k: 2,
            phi_bounds: (0.001, 500.0),
        }
    }
}

impl SimDesign {
    pub fn p(&self) -> usize {
        self.means.len()
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 || self.sigmasq.len() != p || self.phi.len() != p {
            return Err(SvcError::Config(format!(
                "design lists {} means, {} variances, {} ranges",
                p,
                self.sigmasq.len(),
                self.phi.len()
            )));
        }
        if self.side < 2 {
            return Err(SvcError::Config("grid side must be at least 2".into()));
        }
        if self.n() > MAX_DENSE_LOCATIONS {
            return Err(SvcError::Config(format!(
                "{} locations is too many for dense generation (limit {MAX_DENSE_LOCATIONS})",
                self.n()
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(SvcError::Config("grid spacing must be positive".into()));
        }
        if self.sigmasq.iter().chain(self.phi.iter()).any(|v| !(*v > 0.0)) || !(self.tausq > 0.0) {
            return Err(SvcError::Config("variances and ranges must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> CoordMatrix {
        grid_coords(self.side, self.spacing, self.n())
    }
}

fn grid_coords(side: usize, spacing: f64, n: usize) -> CoordMatrix {
    CoordMatrix::new(
        (0..n)
            .map(|i| [(i % side) as f64 * spacing, (i / side) as f64 * spacing])
            .collect(),
    )
    .expect("grid coordinates are finite")
}

/// SplitMix64 of `master` and `index`; gives independent-looking seeds for
/// replications without sharing a generator across threads.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws a dataset and its true `n x p` coefficient surfaces.
///
/// The first covariate is the intercept; the rest are standard normal.
pub fn generate_synthetic<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<(Dataset, DMatrix<f64>)> {
    design.validate()?;
    let n = design.n();
    let p = design.p();
    let coords = design.grid();
    let d = squared_distance_matrix(&coords, &coords)?;

    let mut truth = DMatrix::zeros(n, p);
    for r in 0..p {
        let k = kernel_matrix(&d, design.phi[r])?;
        let f = cholesky_spd(k.matrix(), &DEFAULT_JITTER)?;
        let z = standard_normal_vec(n, rng);
        let w = f.lower_mul(&z)? * design.sigmasq[r].sqrt();
        truth.set_column(r, &w.add_scalar(design.means[r]));
    }
    let mut x = DMatrix::from_element(n, p, 1.0);
    for r in 1..p {
        x.set_column(r, &standard_normal_vec(n, rng));
    }
    let noise = standard_normal_vec(n, rng) * design.tausq.sqrt();
    let y = DVector::from_fn(n, |i, _| (0..p).map(|r| x[(i, r)] * truth[(i, r)]).sum::<f64>() + noise[i]);

    let mut names = vec!["intercept".to_string()];
    names.extend((2..=p).map(|r| format!("x{r}")));
    let data = Dataset::with_names(y, x, coords, "response".into(), names)?;
    Ok((data, truth))
}

/// `location_index,x,y,<name>...` with the true surface values.
pub fn write_truth_csv(path: &Path, coords: &CoordMatrix, truth: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if truth.nrows() != coords.len() || truth.ncols() != names.len() {
        return Err(SvcError::DimensionMismatch(format!(
            "truth is {}x{} for {} locations and {} names",
            truth.nrows(),
            truth.ncols(),
            coords.len(),
            names.len()
        )));
    }
    let mut header = vec!["location_index".to_string(), "x".into(), "y".into()];
    header.extend(names.iter().cloned());
    let rows = (0..coords.len()).map(|i| {
        let pt = coords.row(i);
        let mut row = vec![i.to_string(), format!("{}", pt[0]), format!("{}", pt[1])];
        row.extend(truth.row(i).iter().map(|v| format!("{v}")));
        row
    });
    write_csv_table(path, &header, rows)
}

/// Reads the named columns of a file written by [`write_truth_csv`].
pub fn read_truth_csv(path: &Path, names: &[String]) -> Result<DMatrix<f64>> {
    read_surface_columns(path, names, "")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Wall time per fit, in seconds.
    pub fit_seconds: Vec<f64>,
    pub replications: usize,
}

impl MetricsReport {
    pub fn mean_seconds(&self) -> f64 {
        if self.fit_seconds.is_empty() {
            return 0.0;
        }
        self.fit_seconds.iter().sum::<f64>() / self.fit_seconds.len() as f64
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("coefficient,bias,rmse\n");
        for (r, name) in names.iter().enumerate() {
            out.push_str(&format!("{name},{},{}\n", self.bias[r], self.rmse[r]));
        }
        out.push_str(&format!("time_seconds_mean,{},\n", self.mean_seconds()));
        out
    }

    pub fn to_text(&self, names: &[String]) -> String {
        let mut out = format!("replications: {}\n", self.replications);
        out.push_str(&format!("{:<12} {:>10} {:>10}\n", "coefficient", "bias", "rmse"));
        for (r, name) in names.iter().enumerate() {
            out.push_str(&format!("{:<12} {:>10.4} {:>10.4}\n", name, self.bias[r], self.rmse[r]));
        }
        out.push_str(&format!("mean fit time: {:.3} s\n", self.mean_seconds()));
        out
    }

    pub fn write(&self, dir: &Path, names: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SvcError::io(dir, e))?;
        let csv = dir.join("metrics.csv");
        std::fs::write(&csv, self.to_csv(names)).map_err(|e| SvcError::io(&csv, e))?;
        let txt = dir.join("metrics.txt");
        std::fs::write(&txt, self.to_text(names)).map_err(|e| SvcError::io(&txt, e))
    }
}

/// Bias and RMSE per coefficient, pooled over locations and replications.
pub fn bias_rmse(estimates: &[DMatrix<f64>], truths: &[DMatrix<f64>]) -> Result<MetricsReport> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(SvcError::DimensionMismatch(format!(
            "{} estimate sets vs {} truth sets",
            estimates.len(),
            truths.len()
        )));
    }
    let p = truths[0].ncols();
    let mut sum = vec![0.0; p];
    let mut sq = vec![0.0; p];
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if e.shape() != t.shape() || t.ncols() != p {
            return Err(SvcError::DimensionMismatch(format!(
                "estimate {:?} vs truth {:?}",
                e.shape(),
                t.shape()
            )));
        }
        for r in 0..p {
            for i in 0..t.nrows() {
                let err = e[(i, r)] - t[(i, r)];
                sum[r] += err;
                sq[r] += err * err;
            }
        }
        count += t.nrows();
    }
    let c = count as f64;
    Ok(MetricsReport {
        bias: sum.iter().map(|s| s / c).collect(),
        rmse: sq.iter().map(|s| (s / c).sqrt()).collect(),
        fit_seconds: Vec::new(),
        replications: estimates.len(),
    })
}

/// One conditional for `w*_r`, spelled out densely.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    /// Prior correlation `K*` (any jitter already on the diagonal).
    pub corr: DMatrix<f64>,
    pub sigmasq: f64,
    pub tausq: f64,
    pub x_r: DVector<f64>,
    /// Partial residual `Y - sum_{j != r} X_j w_j`.
    pub y_tilde: DVector<f64>,
}

/// Posterior of `w*_r` by textbook dense algebra:
/// `Sigma0 = sigmasq K`, `Sigma = tausq diag(1 / X^2)`,
/// `Sigma1 = (Sigma0^-1 + Sigma^-1)^-1`, `mu1 = Sigma1 Sigma^-1 (Y~ / X)`.
///
/// Independent of the sampler's Cholesky path; for tests only.
pub fn dense_oracle_posterior(inst: &OracleInstance) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = inst.corr.nrows();
    if m > MAX_ORACLE_DIM {
        return Err(SvcError::Config(format!("oracle limited to dimension {MAX_ORACLE_DIM}, got {m}")));
    }
    if inst.x_r.len() != m || inst.y_tilde.len() != m {
        return Err(SvcError::DimensionMismatch("oracle inputs disagree in length".into()));
    }
    if inst.x_r.iter().any(|x| *x == 0.0) {
        return Err(SvcError::Domain("oracle needs every covariate value nonzero".into()));
    }
    let sigma0 = &inst.corr * inst.sigmasq;
    let sigma = DMatrix::from_diagonal(&inst.x_r.map(|x| inst.tausq / (x * x)));
    let inv = |a: DMatrix<f64>| {
        a.try_inverse()
            .ok_or_else(|| SvcError::Domain("oracle matrix is singular".into()))
    };
    let sigma_inv = inv(sigma)?;
    let sigma1 = inv(inv(sigma0)? + &sigma_inv)?;
    let ratio = inst.y_tilde.component_div(&inst.x_r);
    let mu1 = &sigma1 * &sigma_inv * ratio;
    Ok((mu1, sigma1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub iterations: usize,
    /// Median seconds per iteration.
    pub subset_seconds: f64,
    pub full_seconds: f64,
}

impl TimingReport {
    /// Subset time over full time.
    pub fn ratio(&self) -> f64 {
        self.subset_seconds / self.full_seconds
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Data for timing runs: the default design's parameters on a grid just
/// large enough for `n` locations, truncated to `n`.
pub fn benchmark_data(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    let side = (n as f64).sqrt().ceil() as usize;
    let base = SimDesign::default();
    let design = SimDesign {
        side: side.max(2),
        sigmasq: vec![1.0; p],
        phi: vec![2.0; p],
        means: (0..p).map(|r| base.means.get(r).copied().unwrap_or(0.0)).collect(),
        ..base
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (full, _) = generate_synthetic(&design, &mut rng)?;
    let rows: Vec<usize> = (0..n).collect();
    Ok(full.select_rows(&rows))
}

/// `m` knots at evenly spaced row indices of `data`.
pub fn spread_knots(data: &Dataset, m: usize) -> Result<KnotSet> {
    let n = data.n();
    if m == 0 || m > n {
        return Err(SvcError::Config(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let rows: Vec<usize> = (0..m).map(|i| i * n / m).collect();
    Ok(KnotSet::from_dataset(&data.select_rows(&rows)))
}

/// Median per-iteration wall time of the subset-GP chain with `m` knots
/// against the full-GP chain, on the same data and seed.
pub fn benchmark_iteration(n: usize, m: usize, p: usize, iterations: usize) -> Result<TimingReport> {
    const REPEATS: usize = 3;
    if m > n {
        return Err(SvcError::Config(format!("m = {m} exceeds n = {n}")));
    }
    let data = benchmark_data(n, p, 7)?;
    let knots = if m == n { KnotSet::from_dataset(&data) } else { spread_knots(&data, m)? };
    let priors = PriorSpec::with_bounds(&vec![0.001; p], &vec![500.0; p])?;
    let mut cfg = RunConfig::new(iterations);
    cfg.seed = 11;

    let time = |f: &dyn Fn() -> Result<()>| -> Result<f64> {
        let mut per = Vec::with_capacity(REPEATS);
        for _ in 0..REPEATS {
            let start = Instant::now();
            f()?;
            per.push(start.elapsed().as_secs_f64() / iterations as f64);
        }
        Ok(median(per))
    };
    let subset_seconds = time(&|| run_chain(&data, &knots, &priors, &cfg).map(|_| ()))?;
    let full_seconds = time(&|| run_chain_full_gp(&data, &priors, &cfg).map(|_| ()))?;
    Ok(TimingReport {
        n,
        m,
        p,
        iterations,
        subset_seconds,
        full_seconds,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Iterations, burn-in and sampler settings; the seed is replaced per
    /// replication.
    pub chain: RunConfig,
    /// Worker threads; `None` uses rayon's default pool.
    pub threads: Option<usize>,
    /// Test hook: report the truth as the estimate and skip fitting.
    pub truth_as_estimate: bool,
}

impl ExperimentOptions {
    pub fn new(chain: RunConfig) -> Self {
        ExperimentOptions {
            chain,
            threads: None,
            truth_as_estimate: false,
        }
    }
}

struct Replicate {
    estimate: DMatrix<f64>,
    truth: DMatrix<f64>,
    seconds: f64,
}

fn replicate(design: &SimDesign, opts: &ExperimentOptions, index: usize) -> Result<Replicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, 2 * index as u64));
    let (data, truth) = generate_synthetic(design, &mut rng)?;
    if opts.truth_as_estimate {
        return Ok(Replicate {
            estimate: truth.clone(),
            truth,
            seconds: f64::MIN_POSITIVE,
        });
    }
    let (knots, _) = filter_complete(&simpleknots(&data, design.k)?)?;
    let p = design.p();
    let priors = PriorSpec::with_bounds(&vec![design.phi_bounds.0; p], &vec![design.phi_bounds.1; p])?;
    let mut cfg = opts.chain.clone();
    cfg.seed = derive_seed(design.seed, 2 * index as u64 + 1);
    cfg.store_surfaces = false;
    let start = Instant::now();
    let samples = run_chain(&data, &knots, &priors, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Replicate {
        estimate: samples.surface_mean,
        truth,
        seconds,
    })
}

/// Generate, select knots, fit and score `design.replications` datasets.
///
/// Replications run in parallel; results are combined in replication order,
/// so the report does not depend on scheduling (apart from timings).
pub fn run_experiment(design: &SimDesign, opts: &ExperimentOptions) -> Result<MetricsReport> {
    design.validate()?;
    opts.chain.validate()?;
    if design.replications == 0 {
        return Err(SvcError::Config("at least one replication is required".into()));
    }
    let work = || {
        (0..design.replications)
            .into_par_iter()
            .map(|i| {
                replicate(design, opts, i).map_err(|e| SvcError::Replication {
                    replication: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let reps = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SvcError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let estimates: Vec<_> = reps.iter().map(|r| r.estimate.clone()).collect();
    let truths: Vec<_> = reps.iter().map(|r| r.truth.clone()).collect();
    let mut report = bias_rmse(&estimates, &truths)?;
    report.fit_seconds = reps.iter().map(|r| r.seconds).collect();
    Ok(report)
}
