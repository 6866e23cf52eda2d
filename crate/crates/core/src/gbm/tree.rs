use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// A binary regression tree stored as a flat node array, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    #[inline]
    pub fn predict_with(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => i = if feature(f) < threshold { left } else { right },
                TreeNode::Leaf { value } => return value,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_with(|f| row[f])
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            TreeNode::Split { threshold, .. } => threshold.is_finite(),
            TreeNode::Leaf { value } => value.is_finite(),
        })
    }
}

/// Second-order split statistics.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn score(&self, l2: f64) -> f64 {
        let d = self.h + l2;
        if d <= 0.0 {
            0.0
        } else {
            self.g * self.g / d
        }
    }

    fn leaf(&self, l2: f64) -> f64 {
        let d = self.h + l2;
        if d <= 1e-300 {
            0.0
        } else {
            -self.g / d
        }
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2: f64,
    pub min_gain: f64,
}

/// Column-major presorted view of the training matrix.
pub(crate) struct Presorted<'a> {
    pub x: &'a [f64],
    pub n_rows: usize,
    pub n_cols: usize,
    /// For each feature, row indices in ascending feature order.
    pub order: Vec<Vec<u32>>,
}

impl<'a> Presorted<'a> {
    pub fn new(x: &'a [f64], n_rows: usize, n_cols: usize) -> Self {
        let order = (0..n_cols)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[a as usize * n_cols + f].total_cmp(&x[b as usize * n_cols + f])
                });
                idx
            })
            .collect();
        Self {
            x,
            n_rows,
            n_cols,
            order,
        }
    }

    #[inline]
    fn value(&self, row: usize, f: usize) -> f64 {
        self.x[row * self.n_cols + f]
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

const NO_SLOT: u32 = u32::MAX;

/// Exact greedy, level-wise tree growth on gradients `g` and hessians `h`.
/// Returns the tree and the leaf node reached by every training row.
pub(crate) fn grow(
    data: &Presorted<'_>,
    g: &[f64],
    h: &[f64],
    params: &TreeParams,
) -> (Tree, Vec<u32>) {
    let n = data.n_rows;
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut node_of = vec![0u32; n];

    // Active frontier: tree node ids and their aggregate statistics.
    let mut total = Stats::default();
    for i in 0..n {
        total.add(g[i], h[i]);
    }
    let mut frontier: Vec<(usize, Stats)> = vec![(0, total)];
    let mut slot_of = vec![0u32; n];
    let mut finished: Vec<(usize, Stats)> = Vec::new();

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let mut left = vec![Stats::default(); k];
        let mut last = vec![f64::NAN; k];

        for f in 0..data.n_cols {
            left.iter_mut().for_each(|s| *s = Stats::default());
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &row in &data.order[f] {
                let row = row as usize;
                let s = slot_of[row];
                if s == NO_SLOT {
                    continue;
                }
                let s = s as usize;
                let v = data.value(row, f);
                let l = &mut left[s];
                if l.n > 0 && v > last[s] {
                    let parent = frontier[s].1;
                    let right = Stats {
                        g: parent.g - l.g,
                        h: parent.h - l.h,
                        n: parent.n - l.n,
                    };
                    if l.n >= params.min_samples_leaf && right.n >= params.min_samples_leaf {
                        let gain =
                            l.score(params.l2) + right.score(params.l2) - parent.score(params.l2);
                        if gain > params.min_gain && best[s].map_or(true, |b| gain > b.gain) {
                            let mid = 0.5 * (last[s] + v);
                            let threshold = if mid > last[s] { mid } else { v };
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                l.add(g[row], h[row]);
                last[s] = v;
            }
        }

        // Apply splits; children form the next frontier.
        let mut next: Vec<(usize, Stats)> = Vec::new();
        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; k];
        for (s, &(node_id, stats)) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let l_id = nodes.len();
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[node_id] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l_id,
                        right: l_id + 1,
                    };
                    let ls = next.len() as u32;
                    next.push((l_id, Stats::default()));
                    next.push((l_id + 1, Stats::default()));
                    child_slots[s] = Some((ls, ls + 1));
                }
                None => finished.push((node_id, stats)),
            }
        }
        for row in 0..n {
            let s = slot_of[row];
            if s == NO_SLOT {
                continue;
            }
            match (child_slots[s as usize], nodes[node_of[row] as usize]) {
                (Some((ls, rs)), TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }) => {
                    let go_left = data.value(row, feature) < threshold;
                    let (slot, id) = if go_left { (ls, left) } else { (rs, right) };
                    slot_of[row] = slot;
                    node_of[row] = id as u32;
                    next[slot as usize].1.add(g[row], h[row]);
                }
                _ => slot_of[row] = NO_SLOT,
            }
        }
        frontier = next;
    }
    finished.extend(frontier);
    for (id, stats) in finished {
        nodes[id] = TreeNode::Leaf {
            value: stats.leaf(params.l2),
        };
    }
    (Tree { nodes }, node_of)
}
