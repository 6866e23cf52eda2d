//! Environments that produce streams of linear systems with contexts.
//!
//! A [`Simulation`] holds one current linear system at a time. The selector
//! attempts it with configurations until one succeeds (or it gives up), then
//! the simulation advances. [`oracle`] has known ground truth for every
//! configuration; [`flowheat`] assembles real Jacobians of a 2D coupled
//! flow and heat transport problem.

pub mod builder;
pub mod flowheat;
pub mod oracle;

use crate::config_space::SolverConfig;
use crate::context::{Context, ContextSchema};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("time step {dt:e} s fell below the floor {floor:e} s at t = {time:e} s")]
    TimeStepUnderflow { dt: f64, floor: f64, time: f64 },
    #[error("environment misconfigured: {0}")]
    Config(String),
    #[error("no current linear system")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    Wall,
    #[default]
    CostProxy,
}

/// Result of one solve attempt as seen by the selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub success: bool,
    /// Seconds charged for the attempt, wall clock or cost proxy.
    pub time: f64,
    pub iterations: usize,
}

pub trait Simulation {
    fn schema(&self) -> &ContextSchema;

    /// Context of the current linear system; `None` once the simulation ends.
    fn current(&self) -> Option<&Context>;

    /// Try to solve the current system. Never changes which system is
    /// current.
    fn attempt(&mut self, config: &SolverConfig, encoding: &[f64]) -> Attempt;

    /// Move on after the current system was solved or given up on.
    fn advance(&mut self, solved: bool) -> Result<(), EnvError>;

    /// Number of linear systems emitted so far, the current one included.
    fn systems_emitted(&self) -> u64;

    fn finished(&self) -> bool {
        self.current().is_none()
    }

    /// Exact reward of every candidate for the current system, where the
    /// environment knows it. `None` entries are configurations that fail.
    fn ground_truth(&self) -> Option<Vec<Option<f64>>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Synthetic,
    Flowheat,
}

/// Seed-determined visiting order of `n` simulations.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Derive an independent stream seed from a base seed and a label.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let a = shuffled_order(15, 3);
        assert_eq!(a, shuffled_order(15, 3));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..15).collect::<Vec<_>>());
        assert_ne!(a, shuffled_order(15, 4));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_eq!(derive_seed(9, "x", 2), derive_seed(9, "x", 2));
    }
}
