//! Online solver selection.
//!
//! The first `num_initial` solved systems use uniformly random
//! configurations. After that the pipeline is trained on everything seen so
//! far and every choice is the approved candidate with the highest predicted
//! reward. New attempts are buffered and trigger a full retrain whenever the
//! buffer holds `batch_size` records. Within one system, a configuration
//! the pipeline picked and that failed is not offered again.

use crate::config_space::{CandidateSet, ConfigSpace, SolverConfig};
use crate::context::{Context, ContextSchema};
use crate::gbm::{GbmError, GbmParams, PipelineModel, TrainingSets};
use crate::perfdata::{DataError, Dataset, PerfRecord, PolicyTag, RecordIds};
use crate::simenv::{Attempt, Simulation};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] GbmError),
    #[error("no current linear system")]
    NoSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub num_initial: usize,
    pub batch_size: usize,
    pub max_failures: usize,
    pub seed: u64,
    pub gbm: GbmParams,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            num_initial: 64,
            batch_size: 64,
            max_failures: 20,
            seed: 0,
            gbm: GbmParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploring,
    Selecting,
}

/// How a configuration was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Explore,
    Greedy,
    /// The pipeline could not rank any candidate; drawn at random.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub provenance: Provenance,
    pub predicted_reward: Option<f64>,
}

/// One attempt within a system, as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptLog {
    pub candidate: usize,
    pub provenance: Provenance,
    pub predicted_reward: Option<f64>,
    pub success: bool,
    pub time: f64,
    pub iterations: usize,
    /// Wall seconds spent choosing, excluding the solve.
    pub select_seconds: f64,
    /// Wall seconds spent in the solve attempt.
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReport {
    pub ids: RecordIds,
    pub attempts: Vec<AttemptLog>,
    pub solved: bool,
    /// Seconds spent retraining after this system's attempts.
    pub retrain_seconds: Vec<f64>,
}

pub struct Selector {
    space: Arc<ConfigSpace>,
    candidates: Arc<CandidateSet>,
    cfg: SelectorConfig,
    policy: PolicyTag,
    phase: Phase,
    solved_systems: usize,
    buffer: Vec<PerfRecord>,
    pipeline: Option<PipelineModel>,
    prior: Vec<PerfRecord>,
    dataset: Dataset,
    rng: ChaCha8Rng,
    retrains: usize,
    pending_retrain_seconds: Vec<f64>,
}

impl Selector {
    /// Online selection: exploration first, then greedy with batched retrains.
    pub fn new(
        space: Arc<ConfigSpace>,
        candidates: Arc<CandidateSet>,
        schema: ContextSchema,
        cfg: SelectorConfig,
    ) -> Self {
        let dataset = Dataset::new(
            space.fingerprint(),
            space.size(),
            space.encoding_length(),
            schema,
        );
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let phase = if cfg.num_initial == 0 {
            Phase::Selecting
        } else {
            Phase::Exploring
        };
        Self {
            space,
            candidates,
            cfg,
            policy: PolicyTag::Selection,
            phase,
            solved_systems: 0,
            buffer: Vec::new(),
            pipeline: None,
            prior: Vec::new(),
            dataset,
            rng,
            retrains: 0,
            pending_retrain_seconds: Vec::new(),
        }
    }

    /// Uniformly random configuration for every attempt.
    pub fn random(
        space: Arc<ConfigSpace>,
        candidates: Arc<CandidateSet>,
        schema: ContextSchema,
        mut cfg: SelectorConfig,
    ) -> Self {
        cfg.num_initial = usize::MAX;
        let mut s = Self::new(space, candidates, schema, cfg);
        s.policy = PolicyTag::Random;
        s
    }

    /// Pre-trained on a prior dataset; no exploration, batched updates kept.
    /// The prior stays out of this run's dataset but is part of every retrain.
    pub fn expert(
        space: Arc<ConfigSpace>,
        candidates: Arc<CandidateSet>,
        schema: ContextSchema,
        cfg: SelectorConfig,
        prior: &Dataset,
    ) -> Result<Self, SelectorError> {
        prior.check_fingerprints(&space.fingerprint(), &schema)?;
        let mut s = Self::new(space, candidates, schema, cfg);
        s.policy = PolicyTag::Expert;
        s.prior = prior.records().to_vec();
        s.phase = Phase::Selecting;
        if !s.prior.is_empty() {
            s.retrain()?;
        }
        Ok(s)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn policy(&self) -> PolicyTag {
        self.policy
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn into_dataset(self) -> Dataset {
        self.dataset
    }

    pub fn pipeline(&self) -> Option<&PipelineModel> {
        self.pipeline.as_ref()
    }

    /// Install a pipeline directly and switch to greedy selection.
    pub fn set_pipeline(&mut self, pm: PipelineModel) {
        self.pipeline = Some(pm);
        self.phase = Phase::Selecting;
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn retrains(&self) -> usize {
        self.retrains
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.cfg
    }

    fn random_index(&mut self, excluded: &[bool]) -> usize {
        let n = self.candidates.len();
        let free = excluded.iter().filter(|&&e| !e).count();
        if excluded.is_empty() || free == 0 {
            return self.rng.gen_range(0..n);
        }
        let k = self.rng.gen_range(0..free);
        (0..n).filter(|&i| !excluded[i]).nth(k).unwrap()
    }

    /// Pick a configuration for a system with context `ctx`. `excluded`
    /// marks candidates already failed on this system (may be empty).
    pub fn choose(&mut self, ctx: &[f64], excluded: &[bool]) -> Result<Choice, SelectorError> {
        let pm = match (self.phase, &self.pipeline) {
            (Phase::Selecting, Some(pm)) => pm,
            (Phase::Exploring, _) | (Phase::Selecting, None) => {
                let provenance = if self.phase == Phase::Exploring {
                    Provenance::Explore
                } else {
                    Provenance::Fallback
                };
                let index = self.random_index(excluded);
                return Ok(Choice {
                    index,
                    provenance,
                    predicted_reward: None,
                });
            }
        };
        let sel = pm.select_mask(&self.candidates.encodings, ctx)?;
        let is_free = |i: usize| excluded.get(i).map_or(true, |&e| !e);
        if sel.rewards.is_empty() {
            // Approved but unrankable (no successes seen yet), or nothing approved.
            let pool: Vec<usize> = sel.approved.iter().copied().filter(|&i| is_free(i)).collect();
            let index = if pool.is_empty() {
                self.random_index(excluded)
            } else {
                pool[self.rng.gen_range(0..pool.len())]
            };
            return Ok(Choice {
                index,
                provenance: Provenance::Fallback,
                predicted_reward: None,
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (&i, &r) in sel.approved.iter().zip(&sel.rewards) {
            if is_free(i) && best.map_or(true, |(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        Ok(match best {
            Some((index, r)) => Choice {
                index,
                provenance: Provenance::Greedy,
                predicted_reward: Some(r),
            },
            None => Choice {
                index: self.random_index(excluded),
                provenance: Provenance::Fallback,
                predicted_reward: None,
            },
        })
    }

    /// Record the outcome of an attempt. Retrains when the buffer fills.
    pub fn feedback(
        &mut self,
        choice: &Choice,
        ctx: &Context,
        attempt: &Attempt,
        ids: RecordIds,
    ) -> Result<(), SelectorError> {
        let encoding = self.candidates.encodings[choice.index].0.clone();
        let rec = if attempt.success {
            PerfRecord::success(encoding, ctx.values.clone(), attempt.time, ids, self.policy)?
        } else {
            PerfRecord::failure(encoding, ctx.values.clone(), Some(attempt.time), ids, self.policy)
        };
        self.dataset.append(rec.clone())?;
        if self.phase == Phase::Selecting {
            self.buffer.push(rec);
            if self.buffer.len() >= self.cfg.batch_size.max(1) {
                self.retrain()?;
            }
        }
        Ok(())
    }

    /// Close a system. Ends exploration (with the first training) once
    /// enough systems have been solved.
    pub fn end_system(&mut self, solved: bool) -> Result<(), SelectorError> {
        if self.phase != Phase::Exploring {
            return Ok(());
        }
        if solved {
            self.solved_systems += 1;
        }
        if self.solved_systems >= self.cfg.num_initial {
            self.phase = Phase::Selecting;
            self.retrain()?;
        }
        Ok(())
    }

    /// Full retrain on the prior plus every record of this run.
    pub fn retrain(&mut self) -> Result<(), SelectorError> {
        let start = Instant::now();
        self.buffer.clear();
        if self.prior.is_empty() && self.dataset.is_empty() {
            return Ok(());
        }
        let sets = TrainingSets::from_records(self.prior.iter().chain(self.dataset.records()))?;
        self.pipeline = Some(PipelineModel::fit_sets(&sets, &self.cfg.gbm)?);
        self.retrains += 1;
        self.pending_retrain_seconds.push(start.elapsed().as_secs_f64());
        Ok(())
    }

    /// Attempt the simulation's current system until it is solved or the
    /// failure limit is reached. Does not advance the simulation.
    pub fn solve_one_system(
        &mut self,
        sim: &mut dyn Simulation,
        ids: RecordIds,
    ) -> Result<SystemReport, SelectorError> {
        let ctx = sim.current().ok_or(SelectorError::NoSystem)?.clone();
        let mut excluded: Vec<bool> = Vec::new();
        let mut attempts = Vec::new();
        let mut solved = false;
        self.pending_retrain_seconds.clear();
        for _ in 0..self.cfg.max_failures.max(1) {
            let t0 = Instant::now();
            let choice = self.choose(&ctx.values, &excluded)?;
            let select_seconds = t0.elapsed().as_secs_f64();
            let config: &SolverConfig = &self.candidates.configs[choice.index];
            let t1 = Instant::now();
            let attempt = sim.attempt(config, &self.candidates.encodings[choice.index].0);
            let solve_seconds = t1.elapsed().as_secs_f64();
            self.feedback(&choice, &ctx, &attempt, ids)?;
            attempts.push(AttemptLog {
                candidate: choice.index,
                provenance: choice.provenance,
                predicted_reward: choice.predicted_reward,
                success: attempt.success,
                time: attempt.time,
                iterations: attempt.iterations,
                select_seconds,
                solve_seconds,
            });
            if attempt.success {
                solved = true;
                break;
            }
            if choice.provenance != Provenance::Explore {
                if excluded.is_empty() {
                    excluded = vec![false; self.candidates.len()];
                }
                excluded[choice.index] = true;
            }
        }
        self.end_system(solved)?;
        Ok(SystemReport {
            ids,
            attempts,
            solved,
            retrain_seconds: std::mem::take(&mut self.pending_retrain_seconds),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::builtin;
    use crate::gbm::{BoostedModel, Mode, Tree, TreeNode};
    use crate::simenv::oracle::{self, OracleParams, SyntheticOracle, SyntheticSim};
    use crate::simenv::EnvError;

    fn fig2() -> (Arc<ConfigSpace>, Arc<CandidateSet>) {
        let s = Arc::new(builtin::example_fig2());
        let c = Arc::new(CandidateSet::new(&s));
        (s, c)
    }

    fn schema() -> ContextSchema {
        oracle::schema()
    }

    /// Scripted environment: outcome decided by a closure over the attempt
    /// count of the current system.
    struct Scripted<F: FnMut(usize, usize) -> bool> {
        ctx: Option<Context>,
        schema: ContextSchema,
        tries: usize,
        systems: u64,
        limit: u64,
        outcome: F,
    }

    impl<F: FnMut(usize, usize) -> bool> Scripted<F> {
        fn new(limit: u64, outcome: F) -> Self {
            let schema = schema();
            let ctx = Context::new(&schema, vec![0.0, 0.5, 0.5]).unwrap();
            Self {
                ctx: Some(ctx),
                schema,
                tries: 0,
                systems: 1,
                limit,
                outcome,
            }
        }
    }

    impl<F: FnMut(usize, usize) -> bool> Simulation for Scripted<F> {
        fn schema(&self) -> &ContextSchema {
            &self.schema
        }
        fn current(&self) -> Option<&Context> {
            self.ctx.as_ref()
        }
        fn attempt(&mut self, _c: &SolverConfig, enc: &[f64]) -> Attempt {
            self.tries += 1;
            let idx = enc.iter().position(|&v| v == 1.0).unwrap_or(0);
            Attempt {
                success: (self.outcome)(self.tries, idx),
                time: 2.0,
                iterations: 1,
            }
        }
        fn advance(&mut self, _solved: bool) -> Result<(), EnvError> {
            self.tries = 0;
            if self.systems >= self.limit {
                self.ctx = None;
            } else {
                self.systems += 1;
            }
            Ok(())
        }
        fn systems_emitted(&self) -> u64 {
            self.systems
        }
    }

    fn ids(k: u64) -> RecordIds {
        RecordIds {
            seq_id: 0,
            sim_id: 0,
            system_id: k,
        }
    }

    #[test]
    fn first_call_explores() {
        let (s, c) = fig2();
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        let ch = sel.choose(&[0.0, 0.0, 0.0], &[]).unwrap();
        assert_eq!(ch.provenance, Provenance::Explore);
        assert_eq!(sel.phase(), Phase::Exploring);
    }

    #[test]
    fn always_success_takes_one_attempt() {
        let (s, c) = fig2();
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        let mut env = Scripted::new(1, |_, _| true);
        let rep = sel.solve_one_system(&mut env, ids(0)).unwrap();
        assert!(rep.solved);
        assert_eq!(rep.attempts.len(), 1);
        assert_eq!(sel.dataset().len(), 1);
    }

    #[test]
    fn late_success_within_limit() {
        let (s, c) = fig2();
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        let mut env = Scripted::new(1, |k, _| k == 20);
        let rep = sel.solve_one_system(&mut env, ids(0)).unwrap();
        assert!(rep.solved);
        assert_eq!(rep.attempts.len(), 20);
        assert_eq!(sel.dataset().len(), 20);
    }

    #[test]
    fn always_fail_exhausts_limit() {
        let (s, c) = fig2();
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        let mut env = Scripted::new(1, |_, _| false);
        let rep = sel.solve_one_system(&mut env, ids(0)).unwrap();
        assert!(!rep.solved);
        assert_eq!(rep.attempts.len(), 20);
        assert!(sel.dataset().records().iter().all(|r| r.reward.is_none()));
    }

    #[test]
    fn exploration_ends_with_training_then_batches() {
        let (s, c) = fig2();
        let cfg = SelectorConfig {
            num_initial: 4,
            batch_size: 3,
            ..Default::default()
        };
        let mut sel = Selector::new(s, c, schema(), cfg);
        let mut env = Scripted::new(100, |_, idx| idx != 0);
        for k in 0..4 {
            assert_eq!(sel.phase(), Phase::Exploring);
            let rep = sel.solve_one_system(&mut env, ids(k)).unwrap();
            if !rep.solved {
                continue;
            }
            env.advance(true).unwrap();
        }
        while sel.phase() == Phase::Exploring {
            sel.solve_one_system(&mut env, ids(9)).unwrap();
        }
        assert_eq!(sel.retrains(), 1);
        assert!(sel.pipeline().is_some());
        let before = sel.dataset().len();
        let mut ok = Scripted::new(100, |_, _| true);
        let mut k = 0;
        while sel.retrains() == 1 {
            sel.solve_one_system(&mut ok, ids(100 + k)).unwrap();
            k += 1;
        }
        assert_eq!(sel.buffer_len(), 0);
        assert_eq!(sel.dataset().len() - before, 3);
    }

    fn stump(value: f64) -> BoostedModel {
        BoostedModel::constant(Mode::Regression, 0, value)
    }

    /// Pipeline over fig2 encodings (9 cells) + 3 context values in which
    /// candidate 3's encoding wins.
    fn hand_pipeline(space: &ConfigSpace, cands: &CandidateSet, approve_all: bool) -> PipelineModel {
        let n_features = space.encoding_length() + 3;
        let mut classifier = BoostedModel::constant(Mode::Classification, n_features, 0.0);
        classifier.base_score = if approve_all { 5.0 } else { -5.0 };
        let target = &cands.encodings[3].0;
        // Reward 1 on the target's restart value and its option cell, else 0.
        let gmres_cell = space
            .cat_slots()
            .iter()
            .position(|s| s.option == "gmres")
            .unwrap();
        let restart_cell = space.cat_slots().len();
        assert_eq!(target[gmres_cell], 1.0);
        let mut reg = stump(0.0);
        reg.n_features = n_features;
        reg.trees.push(Tree {
            nodes: vec![
                TreeNode::Split {
                    feature: restart_cell,
                    threshold: target[restart_cell] - 0.5,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf { value: 0.0 },
                TreeNode::Split {
                    feature: restart_cell,
                    threshold: target[restart_cell] + 0.5,
                    left: 3,
                    right: 4,
                },
                TreeNode::Leaf { value: 1.0 },
                TreeNode::Leaf { value: 0.0 },
            ],
        });
        PipelineModel {
            classifier,
            regressor: Some(reg),
            classifier_samples: 0,
            regressor_samples: 0,
        }
    }

    #[test]
    fn greedy_picks_hand_built_best() {
        let (s, c) = fig2();
        let pm = hand_pipeline(&s, &c, true);
        let target = &c.encodings[3].0;
        // Lowest index among the candidates sharing candidate 3's restart.
        let expected = (0..c.len())
            .find(|&i| c.encodings[i].0[s.cat_slots().len()] == target[s.cat_slots().len()])
            .unwrap();
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        sel.set_pipeline(pm);
        let ch = sel.choose(&[0.0; 3], &[]).unwrap();
        assert_eq!(ch.provenance, Provenance::Greedy);
        assert_eq!(ch.index, expected);
        assert_eq!(ch.predicted_reward, Some(1.0));
    }

    #[test]
    fn all_rejected_falls_back_to_random() {
        let (s, c) = fig2();
        let pm = hand_pipeline(&s, &c, false);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..20 {
            let cfg = SelectorConfig {
                seed,
                ..Default::default()
            };
            let mut sel = Selector::new(s.clone(), c.clone(), schema(), cfg);
            sel.set_pipeline(pm.clone());
            let ch = sel.choose(&[0.0; 3], &[]).unwrap();
            assert_eq!(ch.provenance, Provenance::Fallback);
            seen.insert(ch.index);
        }
        assert!(seen.len() > 5, "{seen:?}");
    }

    #[test]
    fn failed_greedy_choice_is_masked() {
        let (s, c) = fig2();
        let pm = hand_pipeline(&s, &c, true);
        let mut sel = Selector::new(s, c, schema(), SelectorConfig::default());
        sel.set_pipeline(pm);
        let mut env = Scripted::new(1, |k, _| k == 3);
        let rep = sel.solve_one_system(&mut env, ids(0)).unwrap();
        let picks: Vec<usize> = rep.attempts.iter().map(|a| a.candidate).collect();
        assert_eq!(picks.len(), 3);
        let mut dedup = picks.clone();
        dedup.dedup();
        assert_eq!(dedup, picks);
    }

    #[test]
    fn replay_is_deterministic() {
        let space = Arc::new(builtin::synthetic());
        let oracle =
            Arc::new(SyntheticOracle::new(space.clone(), OracleParams::default(), 11).unwrap());
        let cands = Arc::new(oracle.candidates().clone());
        let run = || {
            let cfg = SelectorConfig {
                num_initial: 20,
                batch_size: 16,
                seed: 5,
                ..Default::default()
            };
            let mut sel = Selector::new(space.clone(), cands.clone(), schema(), cfg);
            let mut sim = SyntheticSim::new(oracle.clone(), 3);
            let mut picks = Vec::new();
            let mut k = 0;
            while !sim.finished() {
                let rep = sel.solve_one_system(&mut sim, ids(k)).unwrap();
                picks.extend(rep.attempts.iter().map(|a| a.candidate));
                sim.advance(rep.solved).unwrap();
                k += 1;
            }
            (picks, sel.into_dataset().to_jsonl())
        };
        assert_eq!(run(), run());
    }
}
