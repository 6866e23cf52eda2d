//! Online selection on the synthetic oracle: how close to the exact optimum
//! the choices get, batch by batch.

use solver_select::harness::{Experiment, ExperimentConfig, Policy};

fn main() {
    let cfg = ExperimentConfig {
        policy: Policy::Selection,
        n_sims: 10,
        seed: std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1),
        ..Default::default()
    };
    let exp = Experiment::new(cfg).unwrap();
    let out = exp.run(None).unwrap().remove(0);
    let r = &out.report;
    let top = (0.05 * r.candidates as f64) as usize;
    println!("{} candidates, {} systems, {} attempts", r.candidates, r.systems.len(), r.attempts.len());
    println!("batch  median rank  in top 5%  failures");
    for chunk in r.attempts.chunks(64) {
        let mut ranks: Vec<usize> = chunk.iter().map(|a| a.rank.unwrap()).collect();
        ranks.sort_unstable();
        println!(
            "{:>5}  {:>11}  {:>8.1}%  {:>8}",
            chunk[0].system,
            ranks[ranks.len() / 2],
            100.0 * ranks.iter().filter(|&&k| k < top).count() as f64 / ranks.len() as f64,
            chunk.iter().filter(|a| !a.success).count()
        );
    }
}
