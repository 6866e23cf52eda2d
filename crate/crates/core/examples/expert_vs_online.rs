//! Train an expert on the data of an online run and replay the sequence.

use solver_select::harness::{Experiment, ExperimentConfig, Policy};

fn main() {
    let online_cfg = ExperimentConfig {
        n_sims: 6,
        ..Default::default()
    };
    let online = Experiment::new(online_cfg.clone()).unwrap().run(None).unwrap().remove(0);
    let expert_cfg = ExperimentConfig {
        policy: Policy::Expert,
        prior: Some("in-memory".into()),
        ..online_cfg
    };
    let expert = Experiment::new(expert_cfg)
        .unwrap()
        .run(Some(&online.dataset))
        .unwrap()
        .remove(0);
    for (name, r) in [("online", &online.report), ("expert", &expert.report)] {
        println!(
            "{name:<7} attempts {:>4}  failed {:>3}  mean reward {:.4}",
            r.attempts.len(),
            r.failed_attempts(),
            r.mean_reward().unwrap()
        );
    }
}
