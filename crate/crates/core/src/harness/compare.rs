use super::{Policy, RunReport};
use serde::Serialize;
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("nothing to compare")]
    Empty,
    #[error("report {index} uses space {got}, expected {expected}")]
    Space {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("report {index} uses context schema `{got}`, expected `{expected}`")]
    Schema {
        index: usize,
        expected: String,
        got: String,
    },
}

/// Per-report figures, with deltas against the first report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportLine {
    pub name: String,
    pub policy: Policy,
    pub repeat: usize,
    pub systems: usize,
    pub attempts: usize,
    pub success_rate: f64,
    pub guided_failure_rate: Option<f64>,
    pub mean_success_time: Option<f64>,
    pub total_cost: f64,
    /// Cost per system after the exploration of this report ends.
    pub slope_after_exploration: Option<f64>,
    /// Where the mean successful post-exploration time lies in the random
    /// reports' distribution of successful attempt times, in percent.
    pub percentile_of_random: Option<f64>,
    pub success_rate_delta: f64,
    pub total_cost_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub lines: Vec<ReportLine>,
    /// Pointwise mean cumulative cost per policy, truncated to the shortest
    /// repeat.
    pub mean_curves: Vec<(Policy, Vec<f64>)>,
    curves: Vec<Vec<f64>>,
}

/// Percentage of `sorted` strictly below `value`, ties counting half.
pub fn percentile_of(sorted: &[f64], value: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let below = sorted.partition_point(|&x| x < value);
    let upto = sorted.partition_point(|&x| x <= value);
    100.0 * (below as f64 + 0.5 * (upto - below) as f64) / sorted.len() as f64
}

pub fn mean_curve(curves: &[&[f64]]) -> Vec<f64> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}

fn slope(curve: &[f64], from: usize) -> Option<f64> {
    let last = curve.len().checked_sub(1)?;
    if from >= last {
        return None;
    }
    let start = if from == 0 { 0.0 } else { curve[from - 1] };
    Some((curve[last] - start) / (last + 1 - from) as f64)
}

pub fn compare(reports: &[RunReport]) -> Result<Comparison, CompareError> {
    let first = reports.first().ok_or(CompareError::Empty)?;
    for (index, r) in reports.iter().enumerate() {
        if r.space_fingerprint != first.space_fingerprint {
            return Err(CompareError::Space {
                index,
                expected: first.space_fingerprint.clone(),
                got: r.space_fingerprint.clone(),
            });
        }
        if r.schema_id != first.schema_id {
            return Err(CompareError::Schema {
                index,
                expected: first.schema_id.clone(),
                got: r.schema_id.clone(),
            });
        }
    }
    let mut random: Vec<f64> = reports
        .iter()
        .filter(|r| r.policy == Policy::Random)
        .flat_map(|r| r.attempts.iter().filter(|a| a.success).map(|a| a.time))
        .collect();
    random.sort_by(f64::total_cmp);

    let lines = reports
        .iter()
        .map(|r| {
            let explored = r.exploration_systems();
            let mean_after = r.mean_success_time(explored as u64);
            ReportLine {
                name: r.name.clone(),
                policy: r.policy,
                repeat: r.repeat,
                systems: r.systems.len(),
                attempts: r.attempts.len(),
                success_rate: r.success_rate(),
                guided_failure_rate: r.guided_failure_rate(),
                mean_success_time: r.mean_success_time(0),
                total_cost: r.total_cost(),
                slope_after_exploration: slope(&r.curve(), explored),
                percentile_of_random: (!random.is_empty())
                    .then_some(mean_after)
                    .flatten()
                    .map(|m| percentile_of(&random, m)),
                success_rate_delta: r.success_rate() - first.success_rate(),
                total_cost_delta: r.total_cost() - first.total_cost(),
            }
        })
        .collect();

    let mut mean_curves = Vec::new();
    for p in [Policy::Random, Policy::Selection, Policy::Expert] {
        let cs: Vec<Vec<f64>> = reports.iter().filter(|r| r.policy == p).map(|r| r.curve()).collect();
        if !cs.is_empty() {
            let refs: Vec<&[f64]> = cs.iter().map(|c| c.as_slice()).collect();
            mean_curves.push((p, mean_curve(&refs)));
        }
    }
    Ok(Comparison {
        lines,
        mean_curves,
        curves: reports.iter().map(|r| r.curve()).collect(),
    })
}

fn policy_name(p: Policy) -> &'static str {
    match p {
        Policy::Random => "random",
        Policy::Selection => "selection",
        Policy::Expert => "expert",
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:<9} {:>3} {:>7} {:>8} {:>8} {:>9} {:>11} {:>11} {:>11} {:>9} {:>9}",
            "name", "policy", "rep", "systems", "attempts", "success", "guided_f", "mean_time",
            "total_cost", "slope", "pct_rand", "d_success"
        );
        for l in &self.lines {
            let _ = writeln!(
                out,
                "{:<20} {:<9} {:>3} {:>7} {:>8} {:>8.4} {:>9} {:>11} {:>11.4e} {:>11} {:>9} {:>9.4}",
                l.name,
                policy_name(l.policy),
                l.repeat,
                l.systems,
                l.attempts,
                l.success_rate,
                opt(l.guided_failure_rate, 4),
                l.mean_success_time.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into()),
                l.total_cost,
                l.slope_after_exploration.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into()),
                opt(l.percentile_of_random, 2),
                l.success_rate_delta,
            );
        }
        out
    }

    /// One row per system: every report's cumulative cost, then the mean
    /// per policy.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("system");
        for (k, l) in self.lines.iter().enumerate() {
            let _ = write!(out, ",{}_{}_{}", policy_name(l.policy), l.repeat, k);
        }
        for (p, _) in &self.mean_curves {
            let _ = write!(out, ",mean_{}", policy_name(*p));
        }
        out.push('\n');
        let n = self.curves.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..n {
            let _ = write!(out, "{i}");
            for c in self.curves.iter().chain(self.mean_curves.iter().map(|(_, c)| c)) {
                match c.get(i) {
                    Some(v) => {
                        let _ = write!(out, ",{v:e}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_of(&d, 0.5), 0.0);
        assert_eq!(percentile_of(&d, 2.5), 50.0);
        assert_eq!(percentile_of(&d, 2.0), 37.5);
        assert_eq!(percentile_of(&d, 9.0), 100.0);
    }

    #[test]
    fn mean_of_curves() {
        let a = [1.0, 2.0, 4.0];
        let b = [3.0, 4.0];
        assert_eq!(mean_curve(&[&a, &b]), vec![2.0, 3.0]);
    }

    #[test]
    fn slope_after_index() {
        let c = [1.0, 2.0, 4.0, 6.0];
        assert_eq!(slope(&c, 2), Some(2.0));
        assert_eq!(slope(&c, 0), Some(1.5));
        assert_eq!(slope(&c, 3), None);
    }
}
