//! Random-policy dataset statistics, as text and CSV.

use solver_select::harness::{run_experiment, ExperimentConfig, Policy};

fn main() {
    let cfg = ExperimentConfig {
        policy: Policy::Random,
        n_sims: 5,
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap().remove(0);
    print!("{}", out.report.summary.to_text());
    println!();
    print!("{}", out.report.batches_csv());
}
