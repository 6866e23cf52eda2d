//! Experiments: a policy run over a shuffled sequence of simulations,
//! repeated, with every attempt logged.
//!
//! Each repeat visits the same simulations in a seed-determined order with
//! a fresh selector. Reports contain only deterministic quantities; wall
//! clock overhead goes to a separate series.

mod compare;
mod report;

pub use compare::{compare, mean_curve, percentile_of, Comparison, CompareError, ReportLine};
pub use report::{AttemptRow, BatchStats, OverheadRow, RunReport, SystemRow};

use crate::config_space::{builtin, parse_space, CandidateSet, ConfigSpace, SpaceError};
use crate::context::ContextSchema;
use crate::perfdata::{summarize, DataError, Dataset, PolicyTag, RecordIds};
use crate::selector::{Selector, SelectorConfig, SelectorError};
use crate::simenv::flowheat::{self, FlowHeatParams};
use crate::simenv::oracle::{self, rank_of, OracleParams, SyntheticOracle};
use crate::simenv::{derive_seed, shuffled_order, EnvError, SequenceKind, Simulation, TimingMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    Selection,
    /// Pre-trained on `prior`, no exploration.
    Expert,
}

impl Policy {
    pub fn tag(self) -> PolicyTag {
        match self {
            Policy::Random => PolicyTag::Random,
            Policy::Selection => PolicyTag::Selection,
            Policy::Expert => PolicyTag::Expert,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub policy: Policy,
    /// Prior dataset for the expert policy.
    pub prior: Option<PathBuf>,
    pub environment: SequenceKind,
    /// Shipped space name or path to a space JSON file. Defaults to
    /// `synthetic` or `sequence_a_analog` by environment.
    pub space: Option<String>,
    pub n_sims: usize,
    pub repeats: usize,
    /// Drives visiting order and selector randomness.
    pub seed: u64,
    /// Drives the simulations themselves: oracle coefficients, permeability
    /// fields. Shared by all repeats.
    pub variation_seed: u64,
    pub timing: TimingMode,
    pub output: Option<PathBuf>,
    /// `selector.seed` is replaced by one derived from `seed` per repeat.
    pub selector: SelectorConfig,
    pub oracle: OracleParams,
    pub flowheat: FlowHeatParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            policy: Policy::Selection,
            prior: None,
            environment: SequenceKind::Synthetic,
            space: None,
            n_sims: 15,
            repeats: 1,
            seed: 0,
            variation_seed: 0,
            timing: TimingMode::CostProxy,
            output: None,
            selector: SelectorConfig::default(),
            oracle: OracleParams::default(),
            flowheat: FlowHeatParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths in the file are relative to the file.
        if let Some(dir) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            cfg.prior.as_mut().map(rebase);
            cfg.output.as_mut().map(rebase);
            if let Some(s) = &cfg.space {
                if builtin::by_name(s).is_none() && Path::new(s).is_relative() {
                    cfg.space = Some(dir.join(s).to_string_lossy().into_owned());
                }
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.n_sims == 0 {
            return bad("n_sims must be at least 1");
        }
        if self.selector.max_failures == 0 || self.selector.batch_size == 0 {
            return bad("selector.max_failures and selector.batch_size must be positive");
        }
        if self.policy == Policy::Expert && self.prior.is_none() {
            return bad("the expert policy needs a prior dataset");
        }
        Ok(())
    }

    pub fn space_name(&self) -> &str {
        match (&self.space, self.environment) {
            (Some(s), _) => s,
            (None, SequenceKind::Synthetic) => "synthetic",
            (None, SequenceKind::Flowheat) => "sequence_a_analog",
        }
    }

    pub fn schema(&self) -> ContextSchema {
        match self.environment {
            SequenceKind::Synthetic => oracle::schema(),
            SequenceKind::Flowheat => ContextSchema::flow_heat(self.flowheat.heterogeneous()),
        }
    }
}

/// A shipped space by name, otherwise a JSON file.
pub fn load_space(spec: &str) -> Result<ConfigSpace, HarnessError> {
    if let Some(s) = builtin::by_name(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_space(&text)?)
}

/// Everything a repeat produced.
#[derive(Debug, Clone)]
pub struct RepeatOutput {
    pub report: RunReport,
    pub dataset: Dataset,
    pub overhead: Vec<OverheadRow>,
}

/// Space, candidates and simulation factory shared by all repeats.
pub struct Experiment {
    cfg: ExperimentConfig,
    space: Arc<ConfigSpace>,
    candidates: Arc<CandidateSet>,
    oracle: Option<Arc<SyntheticOracle>>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.check()?;
        let space = Arc::new(load_space(cfg.space_name())?);
        let (candidates, oracle) = match cfg.environment {
            SequenceKind::Synthetic => {
                let o = SyntheticOracle::new(
                    space.clone(),
                    cfg.oracle.clone(),
                    derive_seed(cfg.variation_seed, "oracle", 0),
                )?;
                (Arc::new(o.candidates().clone()), Some(Arc::new(o)))
            }
            SequenceKind::Flowheat => (Arc::new(CandidateSet::new(&space)), None),
        };
        Ok(Self {
            cfg,
            space,
            candidates,
            oracle,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn space(&self) -> &Arc<ConfigSpace> {
        &self.space
    }

    pub fn candidates(&self) -> &Arc<CandidateSet> {
        &self.candidates
    }

    pub fn oracle(&self) -> Option<&Arc<SyntheticOracle>> {
        self.oracle.as_ref()
    }

    fn simulations(&self) -> Result<Vec<Box<dyn Simulation>>, HarnessError> {
        let cfg = &self.cfg;
        Ok(match &self.oracle {
            Some(o) => oracle::make_sequence(o.clone(), cfg.n_sims, cfg.variation_seed)
                .into_iter()
                .map(|s| Box::new(s) as Box<dyn Simulation>)
                .collect(),
            None => {
                let mut p = cfg.flowheat.clone();
                p.timing = cfg.timing;
                flowheat::make_sequence(&p, self.space.clone(), cfg.n_sims, cfg.variation_seed)?
                    .into_iter()
                    .map(|s| Box::new(s) as Box<dyn Simulation>)
                    .collect()
            }
        })
    }

    fn selector(&self, seed: u64, prior: Option<&Dataset>) -> Result<Selector, HarnessError> {
        let mut sc = self.cfg.selector.clone();
        sc.seed = seed;
        let (space, cands, schema) = (self.space.clone(), self.candidates.clone(), self.cfg.schema());
        Ok(match self.cfg.policy {
            Policy::Random => Selector::random(space, cands, schema, sc),
            Policy::Selection => Selector::new(space, cands, schema, sc),
            Policy::Expert => {
                let prior = prior.ok_or_else(|| {
                    HarnessError::Config("the expert policy needs a prior dataset".into())
                })?;
                Selector::expert(space, cands, schema, sc, prior)?
            }
        })
    }

    /// Run repeat `r`. `prior` is required for the expert policy.
    pub fn run_repeat(&self, r: usize, prior: Option<&Dataset>) -> Result<RepeatOutput, HarnessError> {
        let cfg = &self.cfg;
        let base = derive_seed(cfg.seed, "repeat", r as u64);
        let mut sims = self.simulations()?;
        let order = shuffled_order(sims.len(), derive_seed(base, "order", 0));
        let mut sel = self.selector(derive_seed(base, "selector", 0), prior)?;
        let n_cands = self.candidates.len();

        let mut attempts = Vec::new();
        let mut systems = Vec::new();
        let mut overhead = Vec::new();
        let mut errors = Vec::new();
        let mut cumulative = 0.0;
        let mut system = 0u64;
        for &sim_id in &order {
            let sim = sims[sim_id].as_mut();
            while !sim.finished() {
                let truth = sim.ground_truth();
                let ids = RecordIds {
                    seq_id: r as u64,
                    sim_id: sim_id as u64,
                    system_id: system,
                };
                let t0 = Instant::now();
                let rep = sel.solve_one_system(sim, ids)?;
                let wall = t0.elapsed().as_secs_f64();
                let mut cost = 0.0;
                for (k, a) in rep.attempts.iter().enumerate() {
                    cost += a.time;
                    attempts.push(AttemptRow {
                        system,
                        sim_id,
                        attempt: k,
                        candidate: a.candidate,
                        provenance: a.provenance,
                        predicted_reward: a.predicted_reward,
                        success: a.success,
                        time: a.time,
                        iterations: a.iterations,
                        rank: truth.as_ref().map(|t| rank_of(t, a.candidate)),
                    });
                }
                cumulative += cost;
                systems.push(SystemRow {
                    system,
                    sim_id,
                    attempts: rep.attempts.len(),
                    solved: rep.solved,
                    explored: rep
                        .attempts
                        .iter()
                        .any(|a| a.provenance == crate::selector::Provenance::Explore),
                    cost,
                    cumulative_cost: cumulative,
                });
                overhead.push(OverheadRow {
                    system,
                    select_seconds: rep.attempts.iter().map(|a| a.select_seconds).sum(),
                    solve_seconds: rep.attempts.iter().map(|a| a.solve_seconds).sum(),
                    retrain_seconds: rep.retrain_seconds.iter().sum(),
                    retrains: rep.retrain_seconds.len(),
                    wall_seconds: wall,
                });
                system += 1;
                if let Err(e) = sim.advance(rep.solved) {
                    errors.push(format!("simulation {sim_id}, system {system}: {e}"));
                    break;
                }
            }
        }

        let dataset = sel.into_dataset();
        let report = RunReport::new(
            cfg,
            r,
            self.space.fingerprint(),
            n_cands,
            order,
            attempts,
            systems,
            errors,
            summarize(&dataset),
        );
        Ok(RepeatOutput {
            report,
            dataset,
            overhead,
        })
    }

    /// All repeats, written to the output directory when one is set.
    pub fn run(&self, prior: Option<&Dataset>) -> Result<Vec<RepeatOutput>, HarnessError> {
        let loaded;
        let prior = match (prior, &self.cfg.prior, self.cfg.policy) {
            (Some(p), _, _) => Some(p),
            (None, Some(path), Policy::Expert) => {
                loaded = Dataset::load(path)?;
                Some(&loaded)
            }
            _ => None,
        };
        let mut outs = Vec::with_capacity(self.cfg.repeats);
        for r in 0..self.cfg.repeats {
            let out = self.run_repeat(r, prior)?;
            if let Some(dir) = &self.cfg.output {
                write_repeat(&dir.join(format!("repeat_{r}")), &out)?;
            }
            outs.push(out);
        }
        Ok(outs)
    }
}

/// Convenience: build and run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RepeatOutput>, HarnessError> {
    Experiment::new(cfg.clone())?.run(None)
}

/// Files of one repeat: `report.json`, `attempts.csv`, `systems.csv`,
/// `batches.csv`, `summary.txt`, `dataset.jsonl` and `overhead.csv`. All
/// but the last are deterministic in cost-proxy mode.
pub fn write_repeat(dir: &Path, out: &RepeatOutput) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))
    };
    write("report.json", out.report.to_json()?)?;
    write("attempts.csv", out.report.attempts_csv())?;
    write("systems.csv", out.report.systems_csv())?;
    write("batches.csv", out.report.batches_csv())?;
    write("summary.txt", out.report.summary.to_text())?;
    write("overhead.csv", report::overhead_csv(&out.overhead))?;
    out.dataset.save(dir.join("dataset.jsonl"))?;
    Ok(())
}
