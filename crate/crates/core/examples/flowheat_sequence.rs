//! Random against online selection on a short flow-heat sequence, with the
//! cumulative solver cost every 20 systems.

use solver_select::harness::{compare, run_experiment, ExperimentConfig, Policy};
use solver_select::simenv::flowheat::FlowHeatParams;
use solver_select::simenv::SequenceKind;

fn main() {
    let mk = |policy| ExperimentConfig {
        policy,
        environment: SequenceKind::Flowheat,
        n_sims: 3,
        flowheat: FlowHeatParams {
            nx: 24,
            ny: 24,
            ..Default::default()
        },
        ..Default::default()
    };
    let random = run_experiment(&mk(Policy::Random)).unwrap().remove(0).report;
    let selection = run_experiment(&mk(Policy::Selection)).unwrap().remove(0).report;
    let (cr, cs) = (random.curve(), selection.curve());
    println!("system  random      selection");
    for i in (0..cr.len().min(cs.len())).step_by(20) {
        println!("{i:>6}  {:.4e}  {:.4e}", cr[i], cs[i]);
    }
    print!("{}", compare(&[random, selection]).unwrap().to_text());
}
