//! Every preconditioner of the menu on one Jacobian of the flow-heat model:
//! iterations, setup and solve cost in work units.

use solver_select::config_space::{builtin, CandidateSet};
use solver_select::simenv::builder::build_solver;
use solver_select::simenv::flowheat::{FlowHeatParams, FlowHeatSim};
use solver_select::sparse::{solve, Method};
use std::collections::BTreeMap;
use std::sync::Arc;

fn main() {
    let space = Arc::new(builtin::sequence_a_analog());
    let params = FlowHeatParams {
        nx: 24,
        ny: 24,
        ..Default::default()
    };
    let sim = FlowHeatSim::new(params, space.clone(), 1).unwrap();
    let (a, b) = sim.system().expect("injection produces a system");
    println!("n = {}, nnz = {}", a.n(), a.nnz());

    // Best configuration per preconditioner family.
    let cands = CandidateSet::new(&space);
    let mut best: BTreeMap<String, (f64, usize, String)> = BTreeMap::new();
    let mut failures = 0;
    for c in cands.configs.iter().step_by(7) {
        let spec = build_solver(&space, c).unwrap();
        let out = solve(&spec, a, b);
        if !out.converged {
            failures += 1;
            continue;
        }
        let key = match spec.method {
            Method::Direct { .. } => "direct".to_string(),
            Method::Gmres { .. } => spec.precond.label(),
        };
        let entry = best.entry(key).or_insert((f64::INFINITY, 0, String::new()));
        if out.cost_seconds() < entry.0 {
            *entry = (out.cost_seconds(), out.iterations, c.to_string());
        }
    }
    for (label, (cost, it, cfg)) in &best {
        println!("{label:<14} {cost:.3e} s  {it:>4} it  {cfg}");
    }
    println!("{failures} sampled configurations failed");
}
