use super::{BoostedModel, GbmError, GbmParams, Matrix, Mode};
use crate::perfdata::PerfRecord;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Classifier then regressor over `encoding ⧺ context` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub classifier: BoostedModel,
    /// Absent until at least one successful attempt has been recorded.
    pub regressor: Option<BoostedModel>,
    pub classifier_samples: usize,
    pub regressor_samples: usize,
}

/// The two training sets derived from a list of attempts.
#[derive(Debug, Clone)]
pub struct TrainingSets {
    pub classifier_x: Matrix,
    pub classifier_y: Vec<f64>,
    pub regressor_x: Matrix,
    pub regressor_y: Vec<f64>,
}

impl TrainingSets {
    /// Every attempt goes to the classifier; only successes, with their
    /// rewards, go to the regressor.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a PerfRecord>,
    ) -> Result<Self, GbmError> {
        let mut records = records.into_iter().peekable();
        let first = *records.peek().ok_or(GbmError::Empty)?;
        let cols = first.encoding.len() + first.context.len();
        let mut s = Self {
            classifier_x: Matrix::new(cols),
            classifier_y: Vec::new(),
            regressor_x: Matrix::new(cols),
            regressor_y: Vec::new(),
        };
        for r in records {
            let parts = [r.encoding.as_slice(), r.context.as_slice()];
            s.classifier_x.push_parts(&parts)?;
            s.classifier_y.push(f64::from(r.success));
            if let (true, Some(reward)) = (r.success, r.reward) {
                s.regressor_x.push_parts(&parts)?;
                s.regressor_y.push(reward);
            }
        }
        Ok(s)
    }
}

/// Classifier verdicts for a candidate list plus predicted rewards of the
/// approved ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedRewards {
    pub mask: Vec<bool>,
    /// Indices of approved candidates, ascending.
    pub approved: Vec<usize>,
    /// Predicted reward per entry of `approved`; empty without a regressor.
    pub rewards: Vec<f64>,
}

impl MaskedRewards {
    /// Approved candidate with the highest predicted reward, lowest index on
    /// ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&i, &r) in self.approved.iter().zip(&self.rewards) {
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl PipelineModel {
    pub fn fit(records: &[PerfRecord], params: &GbmParams) -> Result<Self, GbmError> {
        Self::fit_sets(&TrainingSets::from_records(records)?, params)
    }

    pub fn fit_sets(sets: &TrainingSets, params: &GbmParams) -> Result<Self, GbmError> {
        let classifier = BoostedModel::fit(
            &sets.classifier_x,
            &sets.classifier_y,
            Mode::Classification,
            params,
        )?;
        let regressor = if sets.regressor_y.is_empty() {
            None
        } else {
            Some(BoostedModel::fit(
                &sets.regressor_x,
                &sets.regressor_y,
                Mode::Regression,
                params,
            )?)
        };
        Ok(Self {
            classifier,
            regressor,
            classifier_samples: sets.classifier_y.len(),
            regressor_samples: sets.regressor_y.len(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.classifier.n_features
    }

    /// Screen candidates through the classifier and score the survivors.
    pub fn select_mask<E: AsRef<[f64]>>(
        &self,
        candidates: &[E],
        ctx: &[f64],
    ) -> Result<MaskedRewards, GbmError> {
        let mut mask = Vec::with_capacity(candidates.len());
        let mut approved = Vec::new();
        for (i, e) in candidates.iter().enumerate() {
            let e = e.as_ref();
            if e.len() + ctx.len() != self.n_features() {
                return Err(GbmError::Dimension {
                    row: i,
                    expected: self.n_features(),
                    got: e.len() + ctx.len(),
                });
            }
            let k = e.len();
            let feature = |f: usize| if f < k { e[f] } else { ctx[f - k] };
            let ok = self.classifier.raw_with(feature) >= 0.0;
            mask.push(ok);
            if ok {
                approved.push(i);
            }
        }
        let rewards = match &self.regressor {
            Some(reg) => approved
                .iter()
                .map(|&i| {
                    let e = candidates[i].as_ref();
                    let k = e.len();
                    reg.raw_with(|f| if f < k { e[f] } else { ctx[f - k] })
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(MaskedRewards {
            mask,
            approved,
            rewards,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GbmError> {
        let m: Self = serde_json::from_str(text).map_err(|e| GbmError::Format(e.to_string()))?;
        m.classifier.validate()?;
        if let Some(r) = &m.regressor {
            r.validate()?;
        }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::{Tree, TreeNode};
    use crate::perfdata::{PolicyTag, RecordIds};

    /// Piecewise-constant tree on one feature: value `vals[k]` on the k-th
    /// integer, built as a right-leaning chain.
    fn step_tree(feature: usize, vals: &[f64]) -> Tree {
        let mut nodes = Vec::new();
        for (k, &v) in vals.iter().enumerate() {
            if k + 1 == vals.len() {
                nodes.push(TreeNode::Leaf { value: v });
            } else {
                let here = nodes.len();
                nodes.push(TreeNode::Split {
                    feature,
                    threshold: k as f64 + 0.5,
                    left: here + 1,
                    right: here + 2,
                });
                nodes.push(TreeNode::Leaf { value: v });
            }
        }
        Tree { nodes }
    }

    fn hand_model(mode: Mode, tree: Tree) -> BoostedModel {
        let mut m = BoostedModel::constant(mode, 2, 0.0);
        m.trees.push(tree);
        m
    }

    #[test]
    fn six_candidate_picture() {
        // Candidate k is encoded as [k]; context has one value.
        let candidates: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64]).collect();
        // Candidates 1 and 4 are predicted to fail.
        let classifier = hand_model(
            Mode::Classification,
            step_tree(0, &[2.0, -2.0, 2.0, 2.0, -2.0, 2.0]),
        );
        // Candidate 4 has the highest reward overall but is discarded.
        let regressor = hand_model(
            Mode::Regression,
            step_tree(0, &[-1.0, -0.5, -2.0, -0.2, 3.0, -0.9]),
        );
        let pm = PipelineModel {
            classifier,
            regressor: Some(regressor),
            classifier_samples: 0,
            regressor_samples: 0,
        };
        let sel = pm.select_mask(&candidates, &[7.0]).unwrap();
        assert_eq!(sel.mask, [true, false, true, true, false, true]);
        assert_eq!(sel.approved, [0, 2, 3, 5]);
        assert_eq!(sel.rewards, [-1.0, -2.0, -0.2, -0.9]);
        assert_eq!(sel.argmax(), Some(3));
    }

    #[test]
    fn constant_classifiers() {
        let candidates: Vec<Vec<f64>> = (0..4).map(|k| vec![k as f64]).collect();
        let mut pm = PipelineModel {
            classifier: BoostedModel::constant(Mode::Classification, 2, 20.0),
            regressor: Some(BoostedModel::constant(Mode::Regression, 2, -1.0)),
            classifier_samples: 0,
            regressor_samples: 0,
        };
        let sel = pm.select_mask(&candidates, &[0.0]).unwrap();
        assert!(sel.mask.iter().all(|&b| b));
        assert_eq!(sel.rewards.len(), 4);
        // Equal rewards: lowest index wins.
        assert_eq!(sel.argmax(), Some(0));

        pm.classifier = BoostedModel::constant(Mode::Classification, 2, -20.0);
        let sel = pm.select_mask(&candidates, &[0.0]).unwrap();
        assert!(sel.mask.iter().all(|&b| !b));
        assert!(sel.rewards.is_empty());
        assert_eq!(sel.argmax(), None);
    }

    fn record(k: usize, success: bool) -> PerfRecord {
        let ids = RecordIds {
            seq_id: 0,
            sim_id: 0,
            system_id: k as u64,
        };
        let enc = vec![(k % 3) as f64, (k % 2) as f64];
        let ctx = vec![k as f64];
        if success {
            PerfRecord::success(enc, ctx, 1.0 + k as f64, ids, PolicyTag::Random).unwrap()
        } else {
            PerfRecord::failure(enc, ctx, None, ids, PolicyTag::Random)
        }
    }

    #[test]
    fn regressor_sees_only_successes() {
        let records: Vec<_> = (0..30).map(|k| record(k, k % 3 != 0)).collect();
        let sets = TrainingSets::from_records(&records).unwrap();
        assert_eq!(sets.classifier_y.len(), 30);
        assert_eq!(sets.regressor_y.len(), 20);
        let succ: Vec<_> = records.iter().filter(|r| r.success).collect();
        for (i, r) in succ.iter().enumerate() {
            assert_eq!(sets.regressor_x.row(i), r.features().as_slice());
            assert_eq!(Some(sets.regressor_y[i]), r.reward);
        }
        let pm = PipelineModel::fit_sets(&sets, &GbmParams::default()).unwrap();
        assert_eq!(pm.regressor_samples, 20);
        assert_eq!(pm.classifier_samples, 30);
    }

    #[test]
    fn all_failures_leave_no_regressor() {
        let records: Vec<_> = (0..10).map(|k| record(k, false)).collect();
        let pm = PipelineModel::fit(&records, &GbmParams::default()).unwrap();
        assert!(pm.regressor.is_none());
        let back = PipelineModel::from_json(&pm.to_json()).unwrap();
        assert_eq!(back, pm);
    }
}
