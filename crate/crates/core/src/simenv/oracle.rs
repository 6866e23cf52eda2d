//! Synthetic environment with queryable ground truth.
//!
//! Expected log-time is a seeded additive model over the encoding: one
//! effect per categorical cell, a quadratic bowl per numerical parameter
//! whose optimum drifts with the context, and cell-by-context interaction
//! terms. A fixed share of configurations always fails; they are picked by
//! conjunction rules over categorical cells so that the failing set has
//! structure a classifier can learn. One designated configuration never
//! fails.

use super::{Attempt, EnvError, Simulation};
use crate::config_space::{CandidateSet, ConfigSpace, DecisionNode, SolverConfig};
use crate::context::{Context, ContextSchema, ContextSource, FeatureSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const CONTEXT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Target share of always-failing configurations.
    pub f_fail: f64,
    /// Standard deviation of log-time noise; 0 makes times exact.
    pub sigma: f64,
    /// Seconds charged for a failed attempt.
    pub failure_time: f64,
    pub steps_per_sim: usize,
    /// Scale of the per-cell effects at the top of the tree.
    pub effect_scale: f64,
    /// Scale of the cell-by-context interactions.
    pub context_scale: f64,
    /// Relative perturbation of cell effects between simulations.
    pub sim_perturbation: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            f_fail: 0.35,
            sigma: 0.0,
            failure_time: 20.0,
            steps_per_sim: 60,
            effect_scale: 0.6,
            context_scale: 0.25,
            sim_perturbation: 0.05,
        }
    }
}

pub fn schema() -> ContextSchema {
    ContextSchema {
        id: "synthetic".into(),
        features: vec![
            FeatureSpec::new("progress", "-", "progress"),
            FeatureSpec::new("level", "-", "level"),
            FeatureSpec::new("oscillation", "-", "oscillation"),
        ],
    }
}

#[derive(Debug, Clone)]
struct NumTerm {
    /// Categorical cell that must be set for the parameter to be on the path.
    gate: Option<usize>,
    grid: Vec<f64>,
    weight: f64,
    center: f64,
    drift: f64,
}

#[derive(Debug)]
pub struct SyntheticOracle {
    space: Arc<ConfigSpace>,
    candidates: CandidateSet,
    params: OracleParams,
    n_cat: usize,
    depth: Vec<usize>,
    effect: Vec<f64>,
    interaction: Vec<[f64; CONTEXT_DIM]>,
    num: Vec<NumTerm>,
    rules: Vec<Vec<usize>>,
    failing: Vec<bool>,
    designated: usize,
}

fn walk(
    node: &DecisionNode,
    gate: Option<usize>,
    depth: usize,
    space: &ConfigSpace,
    cat_depth: &mut [usize],
    num_gate: &mut [Option<usize>],
) {
    match node {
        DecisionNode::Categorical { name, options, .. } => {
            for o in options {
                let idx = space
                    .cat_slots()
                    .iter()
                    .position(|s| &s.node == name && s.option == o.name)
                    .expect("slot exists");
                cat_depth[idx] = depth;
                walk(&o.child, Some(idx), depth + 1, space, cat_depth, num_gate);
            }
        }
        DecisionNode::Numerical { name, child, .. } => {
            let idx = space
                .num_slots()
                .iter()
                .position(|s| &s.name == name)
                .expect("slot exists");
            num_gate[idx] = gate;
            walk(child, gate, depth, space, cat_depth, num_gate);
        }
        DecisionNode::Sequence { children, .. } => {
            for c in children {
                walk(c, gate, depth, space, cat_depth, num_gate);
            }
        }
        DecisionNode::Leaf { .. } => {}
    }
}

impl SyntheticOracle {
    pub fn new(space: Arc<ConfigSpace>, params: OracleParams, seed: u64) -> Result<Self, EnvError> {
        if !(0.0..1.0).contains(&params.f_fail) {
            return Err(EnvError::Config("f_fail must lie in [0, 1)".into()));
        }
        if params.steps_per_sim == 0 || !(params.failure_time > 0.0) || !(params.sigma >= 0.0) {
            return Err(EnvError::Config(
                "steps_per_sim, failure_time and sigma must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_cat = space.cat_slots().len();
        let mut depth = vec![0; n_cat];
        let mut gates = vec![None; space.num_slots().len()];
        walk(space.root(), None, 0, &space, &mut depth, &mut gates);

        let std = Normal::new(0.0, 1.0).unwrap();
        let effect: Vec<f64> = depth
            .iter()
            .map(|&d| params.effect_scale * 0.7f64.powi(d as i32) * std.sample(&mut rng))
            .collect();
        let interaction: Vec<[f64; CONTEXT_DIM]> = depth
            .iter()
            .map(|&d| {
                let s = params.context_scale * 0.7f64.powi(d as i32);
                [0; CONTEXT_DIM].map(|_| s * std.sample(&mut rng))
            })
            .collect();
        let num = space
            .num_slots()
            .iter()
            .zip(&gates)
            .map(|(slot, &gate)| NumTerm {
                gate,
                grid: slot.grid.clone(),
                weight: params.effect_scale * rng.gen_range(0.3..0.8),
                center: rng.gen_range(0.2..0.8),
                drift: rng.gen_range(-0.4..0.4),
            })
            .collect();

        let candidates = CandidateSet::new(&space);
        let mut oracle = Self {
            space,
            candidates,
            params,
            n_cat,
            depth,
            effect,
            interaction,
            num,
            rules: Vec::new(),
            failing: Vec::new(),
            designated: 0,
        };
        oracle.pick_failures(&mut rng);
        Ok(oracle)
    }

    fn pick_failures(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.candidates.len();
        self.designated = rng.gen_range(0..n);
        let mut failing = vec![false; n];
        let mut count = 0usize;
        let target = self.params.f_fail * n as f64;
        let slack = 0.01 * n as f64;
        let cells_of = |enc: &[f64]| -> Vec<usize> {
            (0..self.n_cat).filter(|&k| enc[k] == 1.0).collect()
        };
        let designated_cells = cells_of(&self.candidates.encodings[self.designated].0);
        for _ in 0..20_000 {
            if count as f64 >= target - slack {
                break;
            }
            let anchor = cells_of(&self.candidates.encodings[rng.gen_range(0..n)].0);
            // Rules on top-level cells alone would remove whole families.
            let deep: Vec<usize> = anchor
                .iter()
                .copied()
                .filter(|&k| self.depth[k] > 0)
                .collect();
            let pool = if deep.is_empty() { &anchor } else { &deep };
            let size = if rng.gen_bool(0.5) { 1 } else { 2 };
            let mut rule: Vec<usize> = Vec::new();
            while rule.len() < size.min(pool.len()) {
                let c = pool[rng.gen_range(0..pool.len())];
                if !rule.contains(&c) {
                    rule.push(c);
                }
            }
            if rule.is_empty() || rule.iter().all(|c| designated_cells.contains(c)) {
                continue;
            }
            let hits: Vec<usize> = (0..n)
                .filter(|&i| {
                    !failing[i] && rule.iter().all(|&k| self.candidates.encodings[i].0[k] == 1.0)
                })
                .collect();
            if hits.is_empty() || (count + hits.len()) as f64 > target + slack {
                continue;
            }
            for i in hits {
                failing[i] = true;
            }
            count = failing.iter().filter(|&&f| f).count();
            rule.sort_unstable();
            self.rules.push(rule);
        }
        self.failing = failing;
    }

    pub fn space(&self) -> &Arc<ConfigSpace> {
        &self.space
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn designated(&self) -> &SolverConfig {
        &self.candidates.configs[self.designated]
    }

    /// Realized share of always-failing configurations.
    pub fn failure_fraction(&self) -> f64 {
        self.failing.iter().filter(|&&f| f).count() as f64 / self.failing.len() as f64
    }

    pub fn always_fails(&self, encoding: &[f64]) -> bool {
        self.rules
            .iter()
            .any(|r| r.iter().all(|&k| encoding[k] == 1.0))
    }

    /// Success probability p(a, c): 0 on the failing set, 1 elsewhere.
    pub fn success_probability(&self, encoding: &[f64], _ctx: &[f64]) -> f64 {
        if self.always_fails(encoding) {
            0.0
        } else {
            1.0
        }
    }

    /// Expected log-time μ(a, c) under a simulation's effect perturbation.
    pub fn log_time(&self, encoding: &[f64], ctx: &[f64], perturb: &[f64]) -> f64 {
        let mut mu = 0.0;
        for k in 0..self.n_cat {
            if encoding[k] == 1.0 {
                mu += self.effect[k] * (1.0 + perturb[k]);
                mu += self.interaction[k]
                    .iter()
                    .zip(ctx)
                    .map(|(v, c)| v * c)
                    .sum::<f64>();
            }
        }
        for (j, t) in self.num.iter().enumerate() {
            if t.gate.is_some_and(|g| encoding[g] != 1.0) {
                continue;
            }
            let x = encoding[self.n_cat + j];
            let pos = t
                .grid
                .iter()
                .position(|&g| g == x)
                .unwrap_or(0);
            let z = if t.grid.len() > 1 {
                pos as f64 / (t.grid.len() - 1) as f64
            } else {
                0.0
            };
            let opt = (t.center + t.drift * (ctx[0] - 0.5)).clamp(0.0, 1.0);
            mu += t.weight * (z - opt).powi(2);
        }
        mu
    }

    /// Rewards −μ of every candidate at a context; `None` where the
    /// configuration fails.
    pub fn ground_truth(&self, ctx: &[f64], perturb: &[f64]) -> Vec<Option<f64>> {
        self.candidates
            .encodings
            .iter()
            .zip(&self.failing)
            .map(|(e, &f)| (!f).then(|| -self.log_time(&e.0, ctx, perturb)))
            .collect()
    }
}

/// Rank (0 = best) of candidate `idx` in an exhaustive reward list, failing
/// configurations last. Ties share the better rank.
pub fn rank_of(truth: &[Option<f64>], idx: usize) -> usize {
    match truth[idx] {
        None => truth.iter().filter(|r| r.is_some()).count(),
        Some(r) => truth.iter().filter(|t| t.is_some_and(|v| v > r)).count(),
    }
}

/// One simulation of the synthetic sequence.
pub struct SyntheticSim {
    oracle: Arc<SyntheticOracle>,
    schema: ContextSchema,
    perturb: Vec<f64>,
    level: f64,
    phase: f64,
    step: usize,
    ctx: Option<Context>,
    rng: ChaCha8Rng,
}

impl SyntheticSim {
    pub fn new(oracle: Arc<SyntheticOracle>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let s = oracle.params.sim_perturbation;
        let perturb = (0..oracle.n_cat).map(|_| s * std.sample(&mut rng)).collect();
        let level = rng.gen_range(0.0..1.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut sim = Self {
            oracle,
            schema: schema(),
            perturb,
            level,
            phase,
            step: 0,
            ctx: None,
            rng,
        };
        sim.refresh();
        sim
    }

    fn refresh(&mut self) {
        self.ctx = (self.step < self.oracle.params.steps_per_sim).then(|| {
            let values = schema()
                .features
                .iter()
                .map(|f| self.quantity(&f.extractor).expect("known extractor"))
                .collect();
            Context::new(&self.schema, values).expect("finite context")
        });
    }

    pub fn oracle(&self) -> &Arc<SyntheticOracle> {
        &self.oracle
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

impl ContextSource for SyntheticSim {
    fn quantity(&self, extractor: &str) -> Option<f64> {
        let steps = self.oracle.params.steps_per_sim;
        match extractor {
            "progress" => Some(if steps > 1 {
                self.step as f64 / (steps - 1) as f64
            } else {
                0.0
            }),
            "level" => Some(self.level),
            "oscillation" => {
                let period = (steps as f64 / 2.0).max(1.0);
                let arg = std::f64::consts::TAU * self.step as f64 / period + self.phase;
                Some(0.5 + 0.5 * arg.sin())
            }
            _ => None,
        }
    }
}

impl Simulation for SyntheticSim {
    fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    fn current(&self) -> Option<&Context> {
        self.ctx.as_ref()
    }

    fn attempt(&mut self, _config: &SolverConfig, encoding: &[f64]) -> Attempt {
        let Some(ctx) = &self.ctx else {
            return Attempt {
                success: false,
                time: self.oracle.params.failure_time,
                iterations: 0,
            };
        };
        let p = self.oracle.success_probability(encoding, &ctx.values);
        let success = p >= 1.0 || (p > 0.0 && self.rng.gen_bool(p));
        if !success {
            return Attempt {
                success: false,
                time: self.oracle.params.failure_time,
                iterations: 0,
            };
        }
        let mu = self.oracle.log_time(encoding, &ctx.values, &self.perturb);
        let noise = if self.oracle.params.sigma > 0.0 {
            self.oracle.params.sigma * Normal::new(0.0, 1.0).unwrap().sample(&mut self.rng)
        } else {
            0.0
        };
        Attempt {
            success: true,
            time: (mu + noise).exp(),
            iterations: 0,
        }
    }

    fn advance(&mut self, _solved: bool) -> Result<(), EnvError> {
        if self.ctx.is_none() {
            return Err(EnvError::Finished);
        }
        self.step += 1;
        self.refresh();
        Ok(())
    }

    fn systems_emitted(&self) -> u64 {
        (self.step + usize::from(self.ctx.is_some())) as u64
    }

    fn ground_truth(&self) -> Option<Vec<Option<f64>>> {
        let ctx = self.ctx.as_ref()?;
        Some(self.oracle.ground_truth(&ctx.values, &self.perturb))
    }
}

/// `n_sims` simulations sharing one oracle, each with its own variation.
pub fn make_sequence(oracle: Arc<SyntheticOracle>, n_sims: usize, seed: u64) -> Vec<SyntheticSim> {
    (0..n_sims)
        .map(|i| SyntheticSim::new(oracle.clone(), super::derive_seed(seed, "synthetic-sim", i as u64)))
        .collect()
}
