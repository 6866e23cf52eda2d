//! Performance records, rewards and datasets.
//!
//! A dataset file is line-delimited JSON: the first line is a
//! [`DatasetHeader`], every following line one [`PerfRecord`]. Records are
//! appended and flushed one at a time so that a crashed run still leaves a
//! readable prefix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextSchema;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("reward requires a positive time, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("fingerprint mismatch: dataset has {expected}, got {got}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// R = -ln T. Natural log; only the ordering matters to the selector.
pub fn reward_from_time(t: f64) -> Result<f64, DataError> {
    if t > 0.0 && t.is_finite() {
        Ok(-t.ln())
    } else {
        Err(DataError::NonPositiveTime(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Random,
    Selection,
    Expert,
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyTag::Random => "random",
            PolicyTag::Selection => "selection",
            PolicyTag::Expert => "expert",
        })
    }
}

/// Where in a run an attempt happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordIds {
    pub seq_id: u64,
    pub sim_id: u64,
    pub system_id: u64,
}

/// One solve attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub encoding: Vec<f64>,
    pub context: Vec<f64>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(flatten)]
    pub ids: RecordIds,
    pub policy: PolicyTag,
}

impl PerfRecord {
    pub fn success(
        encoding: Vec<f64>,
        context: Vec<f64>,
        time: f64,
        ids: RecordIds,
        policy: PolicyTag,
    ) -> Result<Self, DataError> {
        let reward = reward_from_time(time)?;
        Ok(Self {
            encoding,
            context,
            success: true,
            time: Some(time),
            reward: Some(reward),
            ids,
            policy,
        })
    }

    pub fn failure(
        encoding: Vec<f64>,
        context: Vec<f64>,
        time: Option<f64>,
        ids: RecordIds,
        policy: PolicyTag,
    ) -> Self {
        Self {
            encoding,
            context,
            success: false,
            time,
            reward: None,
            ids,
            policy,
        }
    }

    pub fn check(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidRecord(m.to_string()));
        if let Some(t) = self.time {
            if !(t > 0.0 && t.is_finite()) {
                return bad("time must be positive and finite");
            }
        }
        match (self.success, self.reward) {
            (true, None) => bad("successful attempt without reward"),
            (false, Some(_)) => bad("failed attempt carries a reward"),
            (true, Some(r)) if !r.is_finite() => bad("reward is not finite"),
            _ => Ok(()),
        }
    }

    /// Model input row: encoding followed by context.
    pub fn features(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.encoding.len() + self.context.len());
        row.extend_from_slice(&self.encoding);
        row.extend_from_slice(&self.context);
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub space_fingerprint: String,
    pub space_size: u64,
    pub encoding_length: usize,
    pub schema: ContextSchema,
}

impl DatasetHeader {
    pub fn schema_fingerprint(&self) -> String {
        self.schema.fingerprint()
    }

    fn compatible_with(&self, other: &DatasetHeader) -> Result<(), DataError> {
        if self.space_fingerprint != other.space_fingerprint {
            return Err(DataError::FingerprintMismatch {
                expected: self.space_fingerprint.clone(),
                got: other.space_fingerprint.clone(),
            });
        }
        let (a, b) = (self.schema_fingerprint(), other.schema_fingerprint());
        if a != b {
            return Err(DataError::FingerprintMismatch {
                expected: a,
                got: b,
            });
        }
        Ok(())
    }
}

/// Append-only list of attempts recorded against one space and one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    records: Vec<PerfRecord>,
}

impl Dataset {
    pub fn new(
        space_fingerprint: impl Into<String>,
        space_size: u64,
        encoding_length: usize,
        schema: ContextSchema,
    ) -> Self {
        Self {
            header: DatasetHeader {
                format_version: DATASET_FORMAT_VERSION,
                space_fingerprint: space_fingerprint.into(),
                space_size,
                encoding_length,
                schema,
            },
            records: Vec::new(),
        }
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn records(&self) -> &[PerfRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn successes(&self) -> impl Iterator<Item = &PerfRecord> {
        self.records.iter().filter(|r| r.success)
    }

    pub fn append(&mut self, rec: PerfRecord) -> Result<(), DataError> {
        rec.check()?;
        if rec.encoding.len() != self.header.encoding_length {
            return Err(DataError::InvalidRecord(format!(
                "encoding has {} cells, dataset expects {}",
                rec.encoding.len(),
                self.header.encoding_length
            )));
        }
        if rec.context.len() != self.header.schema.len() {
            return Err(DataError::InvalidRecord(format!(
                "context has {} values, schema `{}` has {}",
                rec.context.len(),
                self.header.schema.id,
                self.header.schema.len()
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    /// Append every record of `other`; both must share space and schema.
    pub fn extend_from(&mut self, other: &Dataset) -> Result<(), DataError> {
        self.header.compatible_with(&other.header)?;
        for r in &other.records {
            self.append(r.clone())?;
        }
        Ok(())
    }

    pub fn check_fingerprints(
        &self,
        space_fingerprint: &str,
        schema: &ContextSchema,
    ) -> Result<(), DataError> {
        if self.header.space_fingerprint != space_fingerprint {
            return Err(DataError::FingerprintMismatch {
                expected: space_fingerprint.to_string(),
                got: self.header.space_fingerprint.clone(),
            });
        }
        let (want, have) = (schema.fingerprint(), self.header.schema_fingerprint());
        if want != have {
            return Err(DataError::FingerprintMismatch {
                expected: want,
                got: have,
            });
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DataError> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl std::io::Read) -> Result<Self, DataError> {
        let mut lines = BufReader::new(reader).lines();
        let first = lines.next().ok_or(DataError::Format {
            line: 1,
            message: "empty file".into(),
        })??;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| DataError::Format {
                line: 1,
                message: e.to_string(),
            })?;
        let mut ds = Dataset {
            header,
            records: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PerfRecord = serde_json::from_str(&line).map_err(|e| DataError::Format {
                line: i + 2,
                message: e.to_string(),
            })?;
            ds.append(rec).map_err(|e| DataError::Format {
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::read(File::open(path)?)
    }
}

/// Streams records to disk as they are produced.
pub struct DatasetWriter<W: Write> {
    out: W,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, header: &DatasetHeader) -> Result<Self, DataError> {
        serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &PerfRecord) -> Result<(), DataError> {
        serde_json::to_writer(&mut self.out, rec).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Dataset summary with the columns of the random/selection statistics tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub num_configurations: u64,
    pub num_data_points: usize,
    pub configurations_tried_pct: f64,
    pub success_rate_pct: f64,
    pub always_success_pct: f64,
    pub always_failure_pct: f64,
    pub run_time_mean: Option<f64>,
    pub run_time_median: Option<f64>,
    pub run_time_min: Option<f64>,
    pub run_time_max: Option<f64>,
}

fn encoding_key(encoding: &[f64]) -> Vec<u64> {
    encoding.iter().map(|v| v.to_bits()).collect()
}

pub fn summarize(ds: &Dataset) -> SummaryStats {
    let mut per_config: BTreeMap<Vec<u64>, (usize, usize)> = BTreeMap::new();
    for r in ds.records() {
        let e = per_config.entry(encoding_key(&r.encoding)).or_default();
        if r.success {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let tried = per_config.len();
    let pct = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let always_success = per_config.values().filter(|(_, f)| *f == 0).count();
    let always_failure = per_config.values().filter(|(s, _)| *s == 0).count();
    let n_success = ds.successes().count();

    let mut times: Vec<f64> = ds.successes().filter_map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    let (mean, median, min, max) = if times.is_empty() {
        (None, None, None, None)
    } else {
        let n = times.len();
        let median = if n % 2 == 1 {
            times[n / 2]
        } else {
            0.5 * (times[n / 2 - 1] + times[n / 2])
        };
        (
            Some(times.iter().sum::<f64>() / n as f64),
            Some(median),
            Some(times[0]),
            Some(times[n - 1]),
        )
    };

    SummaryStats {
        num_configurations: ds.header().space_size,
        num_data_points: ds.len(),
        configurations_tried_pct: if ds.header().space_size == 0 {
            0.0
        } else {
            100.0 * tried as f64 / ds.header().space_size as f64
        },
        success_rate_pct: pct(n_success, ds.len()),
        always_success_pct: pct(always_success, tried),
        always_failure_pct: pct(always_failure, tried),
        run_time_mean: mean,
        run_time_median: median,
        run_time_min: min,
        run_time_max: max,
    }
}

impl SummaryStats {
    fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        vec![
            ("Num. solver configurations", self.num_configurations.to_string()),
            ("Num. data points", self.num_data_points.to_string()),
            ("Configurations tried, %", format!("{:.2}", self.configurations_tried_pct)),
            ("Success rate, %", format!("{:.2}", self.success_rate_pct)),
            ("Always success, %", format!("{:.2}", self.always_success_pct)),
            ("Always failure, %", format!("{:.2}", self.always_failure_pct)),
            ("Run time average, s", opt(self.run_time_mean)),
            ("Run time median, s", opt(self.run_time_median)),
            ("Run time min, s", opt(self.run_time_min)),
            ("Run time max, s", opt(self.run_time_max)),
        ]
    }

    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>12}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(out, "\"{k}\",{v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ContextSchema {
        ContextSchema::flow_heat(false)
    }

    fn ds(size: u64) -> Dataset {
        Dataset::new("abc", size, 2, schema())
    }

    fn rec(enc: [f64; 2], time: Option<f64>, success: bool) -> PerfRecord {
        let ctx = vec![0.0; 8];
        if success {
            PerfRecord::success(
                enc.to_vec(),
                ctx,
                time.unwrap(),
                RecordIds::default(),
                PolicyTag::Random,
            )
            .unwrap()
        } else {
            PerfRecord::failure(enc.to_vec(), ctx, time, RecordIds::default(), PolicyTag::Random)
        }
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward_from_time(1.0).unwrap(), 0.0);
        assert!((reward_from_time(std::f64::consts::E).unwrap() + 1.0).abs() < 1e-15);
        assert!(reward_from_time(0.0).is_err());
        assert!(reward_from_time(-2.0).is_err());
    }

    #[test]
    fn append_grows_by_one() {
        let mut d = ds(2);
        d.append(rec([1.0, 0.0], Some(1.0), true)).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn failure_with_reward_rejected() {
        let mut d = ds(2);
        let mut r = rec([1.0, 0.0], Some(1.0), false);
        r.reward = Some(0.3);
        assert!(matches!(d.append(r), Err(DataError::InvalidRecord(_))));
        assert!(d.is_empty());
    }

    #[test]
    fn mismatched_datasets_do_not_merge() {
        let mut a = ds(2);
        let b = Dataset::new("other", 2, 2, schema());
        assert!(matches!(
            a.extend_from(&b),
            Err(DataError::FingerprintMismatch { .. })
        ));
        let c = Dataset::new("abc", 2, 2, ContextSchema::flow_heat(true));
        assert!(a.extend_from(&c).is_err());
    }

    #[test]
    fn all_succeeded_summary() {
        let mut d = ds(2);
        d.append(rec([1.0, 0.0], Some(2.0), true)).unwrap();
        d.append(rec([0.0, 1.0], Some(3.0), true)).unwrap();
        let s = summarize(&d);
        assert_eq!(s.success_rate_pct, 100.0);
        assert_eq!(s.always_success_pct, 100.0);
        assert_eq!(s.always_failure_pct, 0.0);
    }

    #[test]
    fn hand_built_four_records() {
        let mut d = ds(2);
        d.append(rec([1.0, 0.0], Some(1.0), true)).unwrap();
        d.append(rec([0.0, 1.0], Some(5.0), false)).unwrap();
        d.append(rec([1.0, 0.0], Some(2.0), true)).unwrap();
        d.append(rec([0.0, 1.0], None, false)).unwrap();
        let s = summarize(&d);
        assert_eq!(s.configurations_tried_pct, 100.0);
        assert_eq!(s.success_rate_pct, 50.0);
        assert_eq!(s.always_success_pct, 50.0);
        assert_eq!(s.always_failure_pct, 50.0);
        // failure times never enter the run-time statistics
        assert_eq!(s.run_time_max, Some(2.0));
    }

    #[test]
    fn run_time_stats() {
        let mut d = ds(3);
        for (i, t) in [4.0, 1.0, 2.0].into_iter().enumerate() {
            let mut e = [0.0, 0.0];
            e[0] = i as f64;
            d.append(rec(e, Some(t), true)).unwrap();
        }
        let s = summarize(&d);
        assert!((s.run_time_mean.unwrap() - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.run_time_median, Some(2.0));
        assert_eq!(s.run_time_min, Some(1.0));
        assert_eq!(s.run_time_max, Some(4.0));
    }

    #[test]
    fn inconsistent_configs_leave_a_gap() {
        let mut d = ds(4);
        d.append(rec([1.0, 0.0], Some(1.0), true)).unwrap();
        d.append(rec([1.0, 0.0], Some(1.0), false)).unwrap();
        d.append(rec([0.0, 1.0], Some(1.0), true)).unwrap();
        let s = summarize(&d);
        assert_eq!(s.always_success_pct, 50.0);
        assert_eq!(s.always_failure_pct, 0.0);
        assert_eq!(s.configurations_tried_pct, 50.0);
    }

    #[test]
    fn empty_summary() {
        let s = summarize(&ds(5));
        assert_eq!(s.num_data_points, 0);
        assert_eq!(s.success_rate_pct, 0.0);
        assert!(s.run_time_mean.is_none());
        assert!(s.to_text().contains("Run time median"));
    }

    #[test]
    fn streaming_writer_matches_batch_serialization() {
        let mut d = ds(2);
        d.append(rec([1.0, 0.0], Some(0.25), true)).unwrap();
        d.append(rec([0.0, 1.0], Some(7.5), false)).unwrap();
        let mut w = DatasetWriter::new(Vec::new(), d.header()).unwrap();
        for r in d.records() {
            w.write(r).unwrap();
        }
        let bytes = w.into_inner();
        assert_eq!(String::from_utf8(bytes).unwrap(), d.to_jsonl());
        assert_eq!(Dataset::from_jsonl(&d.to_jsonl()).unwrap(), d);
    }

    #[test]
    fn malformed_line_reports_position() {
        let d = ds(2);
        let text = format!("{}{{not json}}\n", d.to_jsonl());
        match Dataset::from_jsonl(&text) {
            Err(DataError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
