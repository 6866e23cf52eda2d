//! Gradient-boosted decision trees.
//!
//! Two losses are supported: squared error for regression and logistic loss
//! on log-odds for binary classification. Trees are grown level-wise with an
//! exact greedy split search over presorted feature columns, leaves take the
//! Newton step `-G / (H + l2)`.

mod pipeline;
mod tree;

pub use pipeline::{MaskedRewards, PipelineModel, TrainingSets};
pub use tree::{Tree, TreeNode};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;
use tree::{grow, Presorted, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Log-odds used for a single-class classifier. sigmoid(20) stays below 1.
const CONSTANT_LOGIT: f64 = 20.0;

#[derive(Debug, Error)]
pub enum GbmError {
    #[error("no training samples")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Dimension {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: non-finite feature or target")]
    NonFinite { row: usize },
    #[error("row {row}: classification target {value} is not 0 or 1")]
    Label { row: usize, value: f64 },
    #[error("invalid hyperparameters: {0}")]
    Params(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub l2: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            l2: 0.0,
        }
    }
}

impl GbmParams {
    fn check(&self) -> Result<(), GbmError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GbmError::Params("learning_rate must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(GbmError::Params("min_samples_leaf must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(GbmError::Params("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(cols: usize) -> Self {
        Self {
            data: Vec::new(),
            rows: 0,
            cols,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, GbmError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), GbmError> {
        self.push_parts(&[row])
    }

    /// Append one row formed by concatenating `parts`.
    pub fn push_parts(&mut self, parts: &[&[f64]]) -> Result<(), GbmError> {
        let got: usize = parts.iter().map(|p| p.len()).sum();
        if got != self.cols {
            return Err(GbmError::Dimension {
                row: self.rows,
                expected: self.cols,
                got,
            });
        }
        for p in parts {
            self.data.extend_from_slice(p);
        }
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub format_version: u32,
    pub mode: Mode,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training loss before the first round and after every round.
    pub train_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn mean_loss(mode: Mode, y: &[f64], f: &[f64]) -> f64 {
    let s: f64 = match mode {
        Mode::Regression => y.iter().zip(f).map(|(y, f)| 0.5 * (f - y).powi(2)).sum(),
        Mode::Classification => y.iter().zip(f).map(|(y, f)| softplus(*f) - y * f).sum(),
    };
    s / y.len() as f64
}

impl BoostedModel {
    /// A model that ignores its input.
    pub fn constant(mode: Mode, n_features: usize, raw: f64) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            mode,
            n_features,
            base_score: raw,
            learning_rate: 1.0,
            trees: Vec::new(),
            train_loss: Vec::new(),
        }
    }

    pub fn fit(x: &Matrix, y: &[f64], mode: Mode, params: &GbmParams) -> Result<Self, GbmError> {
        params.check()?;
        let n = x.rows();
        if n == 0 {
            return Err(GbmError::Empty);
        }
        if y.len() != n {
            return Err(GbmError::Dimension {
                row: n.min(y.len()),
                expected: n,
                got: y.len(),
            });
        }
        for i in 0..n {
            if !y[i].is_finite() || x.row(i).iter().any(|v| !v.is_finite()) {
                return Err(GbmError::NonFinite { row: i });
            }
            if mode == Mode::Classification && y[i] != 0.0 && y[i] != 1.0 {
                return Err(GbmError::Label { row: i, value: y[i] });
            }
        }

        let base_score = match mode {
            Mode::Regression => y.iter().sum::<f64>() / n as f64,
            Mode::Classification => {
                let pos = y.iter().filter(|&&v| v == 1.0).count();
                if pos == 0 || pos == n {
                    let raw = if pos == n { CONSTANT_LOGIT } else { -CONSTANT_LOGIT };
                    return Ok(Self::constant(mode, x.cols(), raw));
                }
                let p = pos as f64 / n as f64;
                (p / (1.0 - p)).ln()
            }
        };

        let data = Presorted::new(&x.data, n, x.cols());
        let tp = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            l2: params.l2,
            min_gain: 1e-12,
        };
        let mut f = vec![base_score; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut train_loss = vec![mean_loss(mode, y, &f)];

        for _ in 0..params.n_rounds {
            match mode {
                Mode::Regression => {
                    for i in 0..n {
                        g[i] = f[i] - y[i];
                        h[i] = 1.0;
                    }
                }
                Mode::Classification => {
                    for i in 0..n {
                        let p = sigmoid(f[i]);
                        g[i] = p - y[i];
                        h[i] = (p * (1.0 - p)).max(1e-16);
                    }
                }
            }
            let (tree, leaf_of) = grow(&data, &g, &h, &tp);
            for i in 0..n {
                if let TreeNode::Leaf { value } = tree.nodes[leaf_of[i] as usize] {
                    f[i] += params.learning_rate * value;
                }
            }
            trees.push(tree);
            train_loss.push(mean_loss(mode, y, &f));
        }

        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            mode,
            n_features: x.cols(),
            base_score,
            learning_rate: params.learning_rate,
            trees,
            train_loss,
        })
    }

    /// Raw score through a feature accessor; log-odds for classifiers.
    #[inline]
    pub fn raw_with(&self, feature: impl Fn(usize) -> f64 + Copy) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_with(feature)).sum();
        self.base_score + self.learning_rate * s
    }

    fn check_row(&self, row: usize, len: usize) -> Result<(), GbmError> {
        if len != self.n_features {
            return Err(GbmError::Dimension {
                row,
                expected: self.n_features,
                got: len,
            });
        }
        Ok(())
    }

    pub fn predict_raw(&self, row: &[f64]) -> Result<f64, GbmError> {
        self.check_row(0, row.len())?;
        Ok(self.raw_with(|f| row[f]))
    }

    /// Predicted value for regression, success probability for classification.
    pub fn predict(&self, row: &[f64]) -> Result<f64, GbmError> {
        let raw = self.predict_raw(row)?;
        Ok(match self.mode {
            Mode::Regression => raw,
            Mode::Classification => sigmoid(raw),
        })
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, GbmError> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        self.check_row(0, x.cols())?;
        Ok((0..x.rows())
            .map(|i| {
                let r = x.row(i);
                let raw = self.raw_with(|f| r[f]);
                match self.mode {
                    Mode::Regression => raw,
                    Mode::Classification => sigmoid(raw),
                }
            })
            .collect())
    }

    /// Decisions at probability 0.5, i.e. raw log-odds >= 0.
    pub fn classify_batch(&self, x: &Matrix) -> Result<Vec<bool>, GbmError> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        self.check_row(0, x.cols())?;
        Ok((0..x.rows())
            .map(|i| {
                let r = x.row(i);
                self.raw_with(|f| r[f]) >= 0.0
            })
            .collect())
    }

    pub fn validate(&self) -> Result<(), GbmError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(GbmError::Format(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(GbmError::Format("non-finite scalar".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !t.is_finite() || t.max_feature().is_some_and(|f| f >= self.n_features) {
                return Err(GbmError::Format(format!("tree {i} is malformed")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GbmError> {
        let m: Self = serde_json::from_str(text).map_err(|e| GbmError::Format(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), GbmError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GbmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
