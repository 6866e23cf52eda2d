use super::ExperimentConfig;
use crate::perfdata::SummaryStats;
use crate::selector::Provenance;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub system: u64,
    pub sim_id: usize,
    /// Position within the system's retry loop.
    pub attempt: usize,
    pub candidate: usize,
    pub provenance: Provenance,
    pub predicted_reward: Option<f64>,
    pub success: bool,
    pub time: f64,
    pub iterations: usize,
    /// Rank in the exact reward ordering (0 = best), where known.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: u64,
    pub sim_id: usize,
    pub attempts: usize,
    pub solved: bool,
    /// Any attempt drawn by initial exploration.
    pub explored: bool,
    /// Time of all attempts, failed ones included.
    pub cost: f64,
    pub cumulative_cost: f64,
}

/// Run-time distribution of successful attempts over a batch of systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub first_system: u64,
    pub systems: usize,
    pub successes: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BatchStats {
    pub fn from_times(first_system: u64, systems: usize, times: &[f64]) -> Self {
        let mut t = times.to_vec();
        t.sort_by(f64::total_cmp);
        let q = |x: f64| (!t.is_empty()).then(|| quantile(&t, x));
        Self {
            first_system,
            systems,
            successes: t.len(),
            mean: (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64),
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
        }
    }
}

/// Wall-clock cost of the selection machinery for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub system: u64,
    pub select_seconds: f64,
    pub solve_seconds: f64,
    pub retrain_seconds: f64,
    pub retrains: usize,
    /// Whole retry loop, all of the above included.
    pub wall_seconds: f64,
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out =
        String::from("system,select_seconds,solve_seconds,retrain_seconds,retrains,wall_seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{},{:e}",
            r.system, r.select_seconds, r.solve_seconds, r.retrain_seconds, r.retrains, r.wall_seconds
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub policy: super::Policy,
    pub repeat: usize,
    pub seed: u64,
    pub variation_seed: u64,
    pub space_fingerprint: String,
    pub schema_id: String,
    pub candidates: usize,
    /// Simulation visiting order.
    pub order: Vec<usize>,
    pub batch_size: usize,
    pub summary: SummaryStats,
    pub batches: Vec<BatchStats>,
    pub errors: Vec<String>,
    pub systems: Vec<SystemRow>,
    pub attempts: Vec<AttemptRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        cfg: &ExperimentConfig,
        repeat: usize,
        space_fingerprint: String,
        candidates: usize,
        order: Vec<usize>,
        attempts: Vec<AttemptRow>,
        systems: Vec<SystemRow>,
        errors: Vec<String>,
        summary: SummaryStats,
    ) -> Self {
        let batch = cfg.selector.batch_size.max(1);
        let batches = systems
            .chunks(batch)
            .map(|chunk| {
                let (lo, hi) = (chunk[0].system, chunk[chunk.len() - 1].system);
                let times: Vec<f64> = attempts
                    .iter()
                    .filter(|a| a.success && a.system >= lo && a.system <= hi)
                    .map(|a| a.time)
                    .collect();
                BatchStats::from_times(lo, chunk.len(), &times)
            })
            .collect();
        Self {
            name: cfg.name.clone(),
            policy: cfg.policy,
            repeat,
            seed: cfg.seed,
            variation_seed: cfg.variation_seed,
            space_fingerprint,
            schema_id: cfg.schema().id,
            candidates,
            order,
            batch_size: batch,
            summary,
            batches,
            errors,
            systems,
            attempts,
        }
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Systems whose attempts include initial exploration.
    pub fn exploration_systems(&self) -> usize {
        self.systems.iter().filter(|s| s.explored).count()
    }

    /// Attempts chosen by the trained pipeline (greedy or fallback).
    pub fn guided(&self) -> impl Iterator<Item = &AttemptRow> {
        self.attempts
            .iter()
            .filter(|a| a.provenance != Provenance::Explore)
    }

    /// Failure rate of pipeline-guided attempts; `None` without any.
    pub fn guided_failure_rate(&self) -> Option<f64> {
        let (n, f) = self
            .guided()
            .fold((0usize, 0usize), |(n, f), a| (n + 1, f + usize::from(!a.success)));
        (n > 0).then(|| f as f64 / n as f64)
    }

    pub fn success_rate(&self) -> f64 {
        if self.attempts.is_empty() {
            return 0.0;
        }
        self.attempts.iter().filter(|a| a.success).count() as f64 / self.attempts.len() as f64
    }

    pub fn failed_attempts(&self) -> usize {
        self.attempts.iter().filter(|a| !a.success).count()
    }

    pub fn total_cost(&self) -> f64 {
        self.systems.last().map_or(0.0, |s| s.cumulative_cost)
    }

    pub fn curve(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.cumulative_cost).collect()
    }

    /// Mean time of successful attempts from system `from` on.
    pub fn mean_success_time(&self, from: u64) -> Option<f64> {
        let t: Vec<f64> = self
            .attempts
            .iter()
            .filter(|a| a.success && a.system >= from)
            .map(|a| a.time)
            .collect();
        (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
    }

    /// Mean reward −ln t over successful attempts.
    pub fn mean_reward(&self) -> Option<f64> {
        let r: Vec<f64> = self
            .attempts
            .iter()
            .filter(|a| a.success)
            .map(|a| -a.time.ln())
            .collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }

    pub fn attempts_csv(&self) -> String {
        let mut out = String::from(
            "system,sim_id,attempt,candidate,provenance,predicted_reward,success,time,iterations,rank\n",
        );
        for a in &self.attempts {
            let prov = match a.provenance {
                Provenance::Explore => "explore",
                Provenance::Greedy => "greedy",
                Provenance::Fallback => "fallback",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:e},{},{}",
                a.system,
                a.sim_id,
                a.attempt,
                a.candidate,
                prov,
                opt(a.predicted_reward),
                a.success,
                a.time,
                a.iterations,
                a.rank.map(|r| r.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn systems_csv(&self) -> String {
        let mut out = String::from("system,sim_id,attempts,solved,explored,cost,cumulative_cost\n");
        for s in &self.systems {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:e},{:e}",
                s.system, s.sim_id, s.attempts, s.solved, s.explored, s.cost, s.cumulative_cost
            );
        }
        out
    }

    pub fn batches_csv(&self) -> String {
        let mut out = String::from("first_system,systems,successes,mean,min,q1,median,q3,max\n");
        for b in &self.batches {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                b.first_system,
                b.systems,
                b.successes,
                opt(b.mean),
                opt(b.min),
                opt(b.q1),
                opt(b.median),
                opt(b.q3),
                opt(b.max)
            );
        }
        out
    }
}
