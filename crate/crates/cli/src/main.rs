//! `svc`: fit, inspect and simulate Bayesian spatially varying coefficient
//! models from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{broadcast, parse_list, ConfigFile, Resolver};
use svc_core::dataio::{
    load_csv_dataset, predict_response, read_samples, read_surface_means, summarize, write_dataset_csv,
    write_knots_csv, write_predictions, write_samples, write_summary, write_surface_summary, ColumnSpec,
    SummaryTable,
};
use svc_core::gibbs::{run_chain, run_chain_full_gp, InvGamma};
use svc_core::knots::{filter_complete, simpleknots, KnotSet};
use svc_core::simlab::{generate_synthetic, run_experiment, write_truth_csv, ExperimentOptions, SimDesign};
use svc_core::{Dataset, PriorSpec, RunConfig};

const SUMMARY_FILE: &str = "summary.csv";
const SURFACES_FILE: &str = "surfaces.csv";
const PREDICTIONS_FILE: &str = "predictions.csv";
const FULL_GP_WARN_N: usize = 500;

#[derive(Parser)]
#[command(name = "svc", version, about = "Bayesian spatially varying coefficient regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Gibbs sampler and write samples, summaries and predictions.
    Fit(FitArgs),
    /// Select knots on a regular grid and write them as CSV.
    Knots(KnotsArgs),
    /// Simulation study: generate, fit and score synthetic datasets.
    Simulate(SimulateArgs),
    /// Fitted response from posterior-mean surfaces.
    Predict(PredictArgs),
    /// Posterior summaries of a sample directory.
    Summarize(SummarizeArgs),
}

#[derive(Args, Default)]
struct ColumnArgs {
    /// Column holding the first coordinate.
    #[arg(long)]
    x_col: Option<String>,
    /// Column holding the second coordinate.
    #[arg(long)]
    y_col: Option<String>,
    /// Response column.
    #[arg(long)]
    response_col: Option<String>,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long)]
    covariates: Option<String>,
    /// Prepend an all-ones intercept covariate.
    #[arg(long)]
    intercept: bool,
    /// Token marking a missing value.
    #[arg(long)]
    missing_token: Option<String>,
}

const COLUMN_KEYS: &[&str] = &["x-col", "y-col", "response-col", "covariates", "intercept", "missing-token"];

impl ColumnArgs {
    fn resolve(&self, res: &mut Resolver) -> Result<ColumnSpec> {
        let d = ColumnSpec::default();
        Ok(ColumnSpec {
            x: res.get_or("x-col", self.x_col.clone(), d.x)?,
            y: res.get_or("y-col", self.y_col.clone(), d.y)?,
            response: res.get_or("response-col", self.response_col.clone(), d.response)?,
            covariates: res
                .get::<String>("covariates", self.covariates.clone())?
                .map(|s| s.split(',').map(|c| c.trim().to_string()).collect()),
            missing_token: res.get_or("missing-token", self.missing_token.clone(), d.missing_token)?,
            intercept: res.switch("intercept", self.intercept)?,
        })
    }
}

#[derive(Args)]
struct FitArgs {
    /// key=value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Knot CSV with the same columns as the data.
    #[arg(long)]
    knots_data: Option<PathBuf>,
    /// Pick knots with `simpleknots` at this spacing.
    #[arg(long)]
    k: Option<usize>,
    /// Lower bound(s) of the range parameters: one value or one per coefficient.
    #[arg(long)]
    phi_lower: Option<String>,
    /// Upper bound(s) of the range parameters.
    #[arg(long)]
    phi_upper: Option<String>,
    /// Number of MCMC iterations.
    #[arg(long)]
    mcmc: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Keep every n-th iteration.
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    start_tausq: Option<f64>,
    /// Starting sigma^2 value(s).
    #[arg(long)]
    start_sigmasq: Option<String>,
    /// Starting range value(s); default is the midpoint of the bounds.
    #[arg(long)]
    start_phi: Option<String>,
    #[arg(long)]
    sigmasq_shape: Option<f64>,
    #[arg(long)]
    sigmasq_rate: Option<f64>,
    #[arg(long)]
    tausq_shape: Option<f64>,
    #[arg(long)]
    tausq_rate: Option<f64>,
    /// RAM target acceptance rate.
    #[arg(long)]
    target_accept: Option<f64>,
    /// Starting proposal sd(s) on the transformed axis.
    #[arg(long)]
    proposal_sd: Option<String>,
    /// RAM step-size decay exponent.
    #[arg(long)]
    adapt_decay: Option<f64>,
    /// Stop adapting proposals after burn-in.
    #[arg(long)]
    freeze_adaptation: bool,
    /// Also write every interpolated surface draw (w_samples.csv).
    #[arg(long)]
    store_surfaces: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

const FIT_KEYS: &[&str] = &[
    "data",
    "knots-data",
    "k",
    "phi-lower",
    "phi-upper",
    "mcmc",
    "burn-in",
    "thin",
    "seed",
    "out",
    "start-tausq",
    "start-sigmasq",
    "start-phi",
    "sigmasq-shape",
    "sigmasq-rate",
    "tausq-shape",
    "tausq-rate",
    "target-accept",
    "proposal-sd",
    "adapt-decay",
    "freeze-adaptation",
    "store-surfaces",
];

fn resolver(config: Option<&Path>, keys: &[&[&str]]) -> Result<Resolver> {
    let known: Vec<&str> = keys.iter().flat_map(|k| k.iter().copied()).collect();
    Resolver::new(ConfigFile::from_optional(config)?, &known, &["out"])
}

fn path_arg(res: &mut Resolver, key: &str, flag: Option<&PathBuf>) -> Result<Option<PathBuf>> {
    Ok(res
        .get::<String>(key, flag.map(|p| p.display().to_string()))?
        .map(PathBuf::from))
}

fn load(path: &Path, spec: &ColumnSpec) -> Result<Dataset> {
    let (data, report) = load_csv_dataset(path, spec).with_context(|| format!("loading {}", path.display()))?;
    log::info!(
        "{}: {} rows, {} missing responses, {} missing covariate values",
        path.display(),
        report.rows,
        report.missing_response,
        report.missing_covariates
    );
    Ok(data)
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let mut res = resolver(args.config.as_deref(), &[FIT_KEYS, COLUMN_KEYS])?;
    let data_path = path_arg(&mut res, "data", args.data.as_ref())?;
    let phi_lower = res.get::<String>("phi-lower", args.phi_lower.clone())?;
    let phi_upper = res.get::<String>("phi-upper", args.phi_upper.clone())?;
    let mcmc = res.get::<usize>("mcmc", args.mcmc)?;
    let out = path_arg(&mut res, "out", args.out.as_ref())?;
    let missing: Vec<&str> = [
        ("--data", data_path.is_none()),
        ("--phi-lower", phi_lower.is_none()),
        ("--phi-upper", phi_upper.is_none()),
        ("--mcmc", mcmc.is_none()),
        ("--out", out.is_none()),
    ]
    .iter()
    .filter(|(_, absent)| *absent)
    .map(|(name, _)| *name)
    .collect();
    if !missing.is_empty() {
        bail!(
            "missing required settings: {} (required: --data, --phi-lower, --phi-upper, --mcmc, --out; \
             give them as flags or in --config)",
            missing.join(", ")
        );
    }
    let (data_path, out) = (data_path.unwrap(), out.unwrap());
    let spec = args.columns.resolve(&mut res)?;
    let data = load(&data_path, &spec)?;
    let p = data.p();
    let names = data.covariate_names().to_vec();

    let lower = broadcast("--phi-lower", parse_list::<f64>(&phi_lower.unwrap())?, p)?;
    let upper = broadcast("--phi-upper", parse_list::<f64>(&phi_upper.unwrap())?, p)?;
    let mut priors = PriorSpec::with_bounds(&lower, &upper)?;
    let ig = InvGamma::default();
    let s_shape = res.get_or("sigmasq-shape", args.sigmasq_shape, ig.shape)?;
    let s_rate = res.get_or("sigmasq-rate", args.sigmasq_rate, ig.rate)?;
    priors.sigmasq = vec![InvGamma::new(s_shape, s_rate)?; p];
    priors.tausq = InvGamma::new(
        res.get_or("tausq-shape", args.tausq_shape, ig.shape)?,
        res.get_or("tausq-rate", args.tausq_rate, ig.rate)?,
    )?;

    let mut cfg = RunConfig::new(mcmc.unwrap());
    cfg.burn_in = res.get_or("burn-in", args.burn_in, 0)?;
    cfg.thin = res.get_or("thin", args.thin, 1)?;
    cfg.seed = res.get_or("seed", args.seed, 0)?;
    cfg.start.tausq = res.get_or("start-tausq", args.start_tausq, cfg.start.tausq)?;
    if let Some(s) = res.get::<String>("start-sigmasq", args.start_sigmasq.clone())? {
        cfg.start.sigmasq = Some(broadcast("--start-sigmasq", parse_list(&s)?, p)?);
    }
    if let Some(s) = res.get::<String>("start-phi", args.start_phi.clone())? {
        cfg.start.phi = Some(broadcast("--start-phi", parse_list(&s)?, p)?);
    }
    if let Some(s) = res.get::<String>("proposal-sd", args.proposal_sd.clone())? {
        cfg.proposal_sd = Some(broadcast("--proposal-sd", parse_list(&s)?, p)?);
    }
    cfg.target_accept = res.get_or("target-accept", args.target_accept, cfg.target_accept)?;
    cfg.adapt_decay = res.get_or("adapt-decay", args.adapt_decay, cfg.adapt_decay)?;
    cfg.freeze_adaptation = res.switch("freeze-adaptation", args.freeze_adaptation)?;
    cfg.store_surfaces = res.switch("store-surfaces", args.store_surfaces)?;

    let knots_path = path_arg(&mut res, "knots-data", args.knots_data.as_ref())?;
    let k = res.get::<usize>("k", args.k)?;
    let knots: Option<KnotSet> = match (knots_path, k) {
        (Some(_), Some(_)) => bail!("give either --knots-data or --k, not both"),
        (Some(path), None) => Some(complete_knots(KnotSet::from_dataset(&load(&path, &spec)?))?),
        (None, Some(k)) => Some(complete_knots(simpleknots(&data, k)?)?),
        (None, None) => None,
    };

    let start = Instant::now();
    let samples = match &knots {
        Some(knots) => {
            log::info!("subset GP with {} knots", knots.m());
            run_chain(&data, knots, &priors, &cfg)?
        }
        None => {
            if data.n() > FULL_GP_WARN_N {
                log::warn!(
                    "no knots given: running the full GP on {} locations; this scales as n^3 per iteration",
                    data.n()
                );
            }
            if data.is_complete() {
                run_chain_full_gp(&data, &priors, &cfg)?
            } else {
                run_chain(&data, &complete_knots(KnotSet::from_dataset(&data))?, &priors, &cfg)?
            }
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    let manifest = write_samples(&samples, &names, &out, 1, &res.canonical())?;
    let table = summarize(&samples, &names, cfg.burn_in)?;
    write_summary(&out.join(SUMMARY_FILE), &table)?;
    write_surface_summary(&out.join(SURFACES_FILE), &samples, data.coords(), &names)?;
    let prediction = predict_response(&samples.surface_mean, &data)?;
    write_predictions(&out.join(PREDICTIONS_FILE), &data, &prediction)?;

    println!(
        "fit: n={} m={} p={} iterations={} in {:.2}s; config sha256 {}",
        samples.n, samples.m, samples.p, samples.total_iterations, elapsed, manifest.config_sha256
    );
    print_summary(&table);
    println!(
        "predictions: {} predicted, {} missing",
        prediction.predicted_count(),
        prediction.missing_count()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn complete_knots(candidate: KnotSet) -> Result<KnotSet> {
    let (knots, removed) = filter_complete(&candidate)?;
    if removed > 0 {
        log::warn!("dropped {removed} knot(s) with missing values");
    }
    Ok(knots)
}

fn print_summary(table: &SummaryTable) {
    println!(
        "{:<24} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "parameter", "mean", "sd", "q2.5", "q50", "q97.5", "accept"
    );
    for r in &table.rows {
        println!(
            "{:<24} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>8}",
            r.name,
            r.mean,
            r.sd,
            r.q025,
            r.q50,
            r.q975,
            r.acceptance_rate.map_or("".into(), |a| format!("{a:.3}"))
        );
    }
}

#[derive(Args)]
struct KnotsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Keep every k-th distinct coordinate value along each axis.
    #[arg(long)]
    k: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
}

fn cmd_knots(args: &KnotsArgs) -> Result<()> {
    let mut res = resolver(None, &[COLUMN_KEYS])?;
    let spec = args.columns.resolve(&mut res)?;
    let data = load(&args.data, &spec)?;
    let (knots, removed) = filter_complete(&simpleknots(&data, args.k)?)?;
    write_knots_csv(&args.out, &knots, data.response_name(), data.covariate_names())?;
    println!(
        "knots: {} selected ({} dropped for missing values) -> {}",
        knots.m(),
        removed,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    /// Grid side length; locations = side^2.
    #[arg(long)]
    side: Option<usize>,
    /// Grid spacing.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    mcmc: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Knot spacing for `simpleknots`.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    phi_lower: Option<f64>,
    #[arg(long)]
    phi_upper: Option<f64>,
    /// True noise variance.
    #[arg(long)]
    tausq: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for metrics.csv and metrics.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one synthetic dataset (data.csv, truth.csv) here instead of
    /// running the study.
    #[arg(long)]
    dataset_out: Option<PathBuf>,
}

const SIM_KEYS: &[&str] = &[
    "replications",
    "side",
    "spacing",
    "mcmc",
    "burn-in",
    "seed",
    "k",
    "phi-lower",
    "phi-upper",
    "tausq",
    "threads",
    "out",
    "dataset-out",
];

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut res = resolver(args.config.as_deref(), &[SIM_KEYS])?;
    let d = SimDesign::default();
    let design = SimDesign {
        side: res.get_or("side", args.side, d.side)?,
        spacing: res.get_or("spacing", args.spacing, d.spacing)?,
        tausq: res.get_or("tausq", args.tausq, d.tausq)?,
        replications: res.get_or("replications", args.replications, d.replications)?,
        seed: res.get_or("seed", args.seed, d.seed)?,
        k: res.get_or("k", args.k, d.k)?,
        phi_bounds: (
            res.get_or("phi-lower", args.phi_lower, d.phi_bounds.0)?,
            res.get_or("phi-upper", args.phi_upper, d.phi_bounds.1)?,
        ),
        ..d
    };
    let names: Vec<String> = std::iter::once("intercept".to_string())
        .chain((2..=design.p()).map(|r| format!("x{r}")))
        .collect();

    let dataset_out = path_arg(&mut res, "dataset-out", args.dataset_out.as_ref())?;
    let out = path_arg(&mut res, "out", args.out.as_ref())?;
    if dataset_out.is_none() && out.is_none() {
        bail!("give --out (run the study) and/or --dataset-out (write one dataset)");
    }
    if let Some(dir) = dataset_out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
        let (data, truth) = generate_synthetic(&design, &mut rng)?;
        write_dataset_csv(&dir.join("data.csv"), &data)?;
        write_truth_csv(&dir.join("truth.csv"), data.coords(), &truth, &names)?;
        println!("simulate: wrote {} locations to {}", data.n(), dir.display());
    }
    if let Some(dir) = out {
        let mut chain = RunConfig::new(res.get_or("mcmc", args.mcmc, 3000)?);
        chain.burn_in = res.get_or("burn-in", args.burn_in, 2000)?;
        let mut opts = ExperimentOptions::new(chain);
        opts.threads = res.get::<usize>("threads", args.threads)?;
        let start = Instant::now();
        let report = run_experiment(&design, &opts)?;
        report.write(&dir, &names)?;
        print!("{}", report.to_text(&names));
        println!("total wall time: {:.1} s; wrote {}", start.elapsed().as_secs_f64(), dir.display());
    }
    Ok(())
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    /// surfaces.csv written by `fit`.
    #[arg(long)]
    surfaces: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let mut res = resolver(None, &[COLUMN_KEYS])?;
    let spec = args.columns.resolve(&mut res)?;
    let data = load(&args.data, &spec)?;
    let mean = read_surface_means(&args.surfaces, data.covariate_names())
        .with_context(|| format!("reading {}", args.surfaces.display()))?;
    let prediction = predict_response(&mean, &data)?;
    write_predictions(&args.out, &data, &prediction)?;
    println!(
        "predict: {} predicted, {} missing -> {}",
        prediction.predicted_count(),
        prediction.missing_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct SummarizeArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    /// Output CSV (default: <samples>/summary.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let (samples, names) = read_samples(&args.samples)?;
    let table = summarize(&samples, &names, args.burn_in)?;
    let out = args.out.clone().unwrap_or_else(|| args.samples.join(SUMMARY_FILE));
    write_summary(&out, &table)?;
    print_summary(&table);
    println!("{} draws kept; wrote {}", table.kept, out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Knots(a) => cmd_knots(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Summarize(a) => cmd_summarize(a),
    }
}
