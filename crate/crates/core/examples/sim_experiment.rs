//! Runs the default simulation study and prints the metrics.
//!
//! Usage: `sim_experiment [replications] [phi_upper]`

use svc_core::simlab::{run_experiment, ExperimentOptions, SimDesign};
use svc_core::RunConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().map_or(20, |s| s.parse().expect("replications"));
    let base = SimDesign::default();
    let upper: f64 = args.next().map_or(base.phi_bounds.1, |s| s.parse().expect("phi upper"));
    let design = SimDesign {
        replications: reps,
        phi_bounds: (base.phi_bounds.0, upper),
        ..base
    };
    let mut chain = RunConfig::new(3000);
    chain.burn_in = 2000;
    let start = std::time::Instant::now();
    let report = run_experiment(&design, &ExperimentOptions::new(chain)).expect("experiment");
    let names: Vec<String> = ["intercept", "x2", "x3"].iter().map(|s| s.to_string()).collect();
    print!("{}", report.to_text(&names));
    println!("wall: {:.1}s", start.elapsed().as_secs_f64());
}
