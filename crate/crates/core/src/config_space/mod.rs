//! Tree-structured solver configuration space.
//!
//! A space is a rooted decision tree. Every root-to-leaf path picks one option
//! at each categorical node it crosses and one grid value at each numerical
//! node, which makes the set of legal configurations much smaller than the
//! Cartesian product of all decisions.
//!
//! Configurations are encoded into fixed-length vectors: one 0/1 cell per
//! option of every categorical node, followed by one cell per numerical
//! parameter holding the chosen value, or zero when the parameter is not on
//! the configuration's path. Both slot lists follow a pre-order traversal in
//! which a categorical node lists all of its options before descending into
//! them.
//!
//! The on-disk format is JSON; see `spaces/README.md` at the repository root.

pub mod builtin;
mod node;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use node::{DecisionNode, OptionBranch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("failed to parse space definition: {0}")]
    Parse(String),
    #[error("invalid space at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("configuration inconsistent with space at node `{node}`: {reason}")]
    Inconsistent { node: String, reason: String },
}

/// One categorical cell of the encoding: an option of a named node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CatSlot {
    pub node: String,
    pub option: String,
}

impl fmt::Display for CatSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.node, self.option)
    }
}

/// One numerical cell of the encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumSlot {
    pub name: String,
    pub role: Option<String>,
    pub grid: Vec<f64>,
}

/// A single categorical decision on a configuration path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathChoice {
    pub node: String,
    pub option: String,
}

/// One complete solver configuration: every decision made, every parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub path: Vec<PathChoice>,
    pub params: BTreeMap<String, f64>,
}

impl SolverConfig {
    pub fn empty() -> Self {
        Self {
            path: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn choice(&self, node: &str) -> Option<&str> {
        self.path
            .iter()
            .find(|c| c.node == node)
            .map(|c| c.option.as_str())
    }

    /// Builder used mostly in tests and examples.
    pub fn with_choice(mut self, node: &str, option: &str) -> Self {
        self.path.push(PathChoice {
            node: node.to_string(),
            option: option.to_string(),
        });
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in &self.path {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{}={}", c.node, c.option)?;
        }
        for (k, v) in &self.params {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        if first {
            f.write_str("<leaf>")?;
        }
        Ok(())
    }
}

/// Fixed-length structure-preserving encoding of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEncoding(pub Vec<f64>);

impl ConfigEncoding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for ConfigEncoding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A validated decision tree plus its deterministic slot layout.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    root: DecisionNode,
    cat_slots: Vec<CatSlot>,
    num_slots: Vec<NumSlot>,
    cat_index: HashMap<(String, String), usize>,
    num_index: HashMap<String, usize>,
}

impl PartialEq for ConfigSpace {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl ConfigSpace {
    pub fn new(root: DecisionNode) -> Result<Self, SpaceError> {
        let mut names = HashSet::new();
        validate_node(&root, "", &mut names)?;

        let mut cat_slots = Vec::new();
        let mut num_slots = Vec::new();
        collect_slots(&root, &mut cat_slots, &mut num_slots);

        let cat_index = cat_slots
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.node.clone(), s.option.clone()), i))
            .collect();
        let num_index = num_slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        Ok(Self {
            root,
            cat_slots,
            num_slots,
            cat_index,
            num_index,
        })
    }

    pub fn root(&self) -> &DecisionNode {
        &self.root
    }

    pub fn cat_slots(&self) -> &[CatSlot] {
        &self.cat_slots
    }

    pub fn num_slots(&self) -> &[NumSlot] {
        &self.num_slots
    }

    pub fn encoding_length(&self) -> usize {
        self.cat_slots.len() + self.num_slots.len()
    }

    /// Human-readable label for each encoding cell, categorical cells first.
    pub fn slot_labels(&self) -> Vec<String> {
        self.cat_slots
            .iter()
            .map(|s| s.to_string())
            .chain(self.num_slots.iter().map(|s| s.name.clone()))
            .collect()
    }

    /// |𝒜|, the number of path-consistent configurations.
    pub fn size(&self) -> u64 {
        self.root.count()
    }

    /// Short stable hash of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&self.root).expect("tree serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// All configurations, categorical options in pre-order and numerical
    /// grids row-major (the first decision on a path varies slowest).
    pub fn enumerate(&self) -> Vec<SolverConfig> {
        let mut out = Vec::with_capacity(self.size().min(1 << 24) as usize);
        let mut current = SolverConfig::empty();
        let mut pending = vec![&self.root];
        enumerate_into(&mut pending, &mut current, &mut |c| out.push(c.clone()));
        out
    }

    /// Check that `config` is one complete configuration of this tree.
    pub fn validate(&self, config: &SolverConfig) -> Result<(), SpaceError> {
        self.follow(config, |_, _, _| {}).map(|_| ())
    }

    /// Walk the tree along `config`, calling `visit(node, choice, rest)` for
    /// every categorical and numerical node crossed, where `rest` is the
    /// number of configurations spanned by the nodes still pending.
    fn follow<'a>(
        &'a self,
        config: &SolverConfig,
        mut visit: impl FnMut(&'a DecisionNode, Option<&'a OptionBranch>, u64),
    ) -> Result<usize, SpaceError> {
        let mut cursor = 0usize;
        let mut seen_params = 0usize;
        let mut pending: Vec<&DecisionNode> = vec![&self.root];
        while let Some(node) = pending.pop() {
            let rest = || pending.iter().map(|n| n.count()).product::<u64>();
            match node {
                DecisionNode::Categorical { name, options, .. } => {
                    let choice =
                        config
                            .path
                            .get(cursor)
                            .ok_or_else(|| SpaceError::Inconsistent {
                                node: name.clone(),
                                reason: "no option chosen".into(),
                            })?;
                    if &choice.node != name {
                        return Err(SpaceError::Inconsistent {
                            node: name.clone(),
                            reason: format!("path names node `{}` here", choice.node),
                        });
                    }
                    let branch = options
                        .iter()
                        .find(|o| o.name == choice.option)
                        .ok_or_else(|| SpaceError::Inconsistent {
                            node: name.clone(),
                            reason: format!("unknown option `{}`", choice.option),
                        })?;
                    visit(node, Some(branch), rest());
                    cursor += 1;
                    pending.push(&branch.child);
                }
                DecisionNode::Numerical {
                    name, grid, child, ..
                } => {
                    let value =
                        config
                            .params
                            .get(name)
                            .ok_or_else(|| SpaceError::Inconsistent {
                                node: name.clone(),
                                reason: "parameter missing".into(),
                            })?;
                    if !grid.iter().any(|g| g == value) {
                        return Err(SpaceError::Inconsistent {
                            node: name.clone(),
                            reason: format!("value {value} is not on the grid"),
                        });
                    }
                    visit(node, None, rest());
                    seen_params += 1;
                    pending.push(child);
                }
                DecisionNode::Sequence { children, .. } => {
                    pending.extend(children.iter().rev());
                }
                DecisionNode::Leaf { .. } => {}
            }
        }
        if let Some(extra) = config.path.get(cursor) {
            return Err(SpaceError::Inconsistent {
                node: extra.node.clone(),
                reason: "decision is not on the configuration path".into(),
            });
        }
        if seen_params != config.params.len() {
            let mut on_path = HashSet::new();
            self.follow_names(config, &mut on_path);
            let stray = config
                .params
                .keys()
                .find(|k| !on_path.contains(k.as_str()))
                .cloned()
                .unwrap_or_default();
            return Err(SpaceError::Inconsistent {
                node: stray,
                reason: "parameter is not on the configuration path".into(),
            });
        }
        Ok(cursor)
    }

    fn follow_names<'a>(&'a self, config: &SolverConfig, names: &mut HashSet<&'a str>) {
        let mut pending: Vec<&DecisionNode> = vec![&self.root];
        let mut cursor = 0;
        while let Some(node) = pending.pop() {
            match node {
                DecisionNode::Categorical { options, .. } => {
                    let Some(choice) = config.path.get(cursor) else {
                        return;
                    };
                    cursor += 1;
                    if let Some(o) = options.iter().find(|o| o.name == choice.option) {
                        pending.push(&o.child);
                    }
                }
                DecisionNode::Numerical { name, child, .. } => {
                    names.insert(name);
                    pending.push(child);
                }
                DecisionNode::Sequence { children, .. } => pending.extend(children.iter().rev()),
                DecisionNode::Leaf { .. } => {}
            }
        }
    }

    /// Structure-preserving encoding; validates first.
    pub fn encode(&self, config: &SolverConfig) -> Result<ConfigEncoding, SpaceError> {
        self.validate(config)?;
        Ok(self.encode_unchecked(config))
    }

    pub(crate) fn encode_unchecked(&self, config: &SolverConfig) -> ConfigEncoding {
        let mut v = vec![0.0; self.encoding_length()];
        for c in &config.path {
            if let Some(&i) = self.cat_index.get(&(c.node.clone(), c.option.clone())) {
                v[i] = 1.0;
            }
        }
        let offset = self.cat_slots.len();
        for (name, value) in &config.params {
            if let Some(&j) = self.num_index.get(name) {
                v[offset + j] = *value;
            }
        }
        ConfigEncoding(v)
    }

    /// Uniform draw over 𝒜: options are weighted by their subtree sizes.
    pub fn sample_random<R: Rng + ?Sized>(&self, rng: &mut R) -> SolverConfig {
        let mut config = SolverConfig::empty();
        let mut pending: Vec<&DecisionNode> = vec![&self.root];
        while let Some(node) = pending.pop() {
            match node {
                DecisionNode::Categorical { name, options, .. } => {
                    let total: u64 = options.iter().map(|o| o.child.count()).sum();
                    let mut pick = rng.gen_range(0..total);
                    let mut chosen = &options[options.len() - 1];
                    for o in options {
                        let c = o.child.count();
                        if pick < c {
                            chosen = o;
                            break;
                        }
                        pick -= c;
                    }
                    config.path.push(PathChoice {
                        node: name.clone(),
                        option: chosen.name.clone(),
                    });
                    pending.push(&chosen.child);
                }
                DecisionNode::Numerical {
                    name, grid, child, ..
                } => {
                    let value = grid[rng.gen_range(0..grid.len())];
                    config.params.insert(name.clone(), value);
                    pending.push(child);
                }
                DecisionNode::Sequence { children, .. } => pending.extend(children.iter().rev()),
                DecisionNode::Leaf { .. } => {}
            }
        }
        config
    }

    /// Position of `config` in [`ConfigSpace::enumerate`] order.
    pub fn index_of(&self, config: &SolverConfig) -> Result<usize, SpaceError> {
        let mut index = 0u64;
        self.follow(config, |node, branch, rest| match node {
            DecisionNode::Categorical { options, .. } => {
                let chosen = branch.expect("categorical visit carries its branch");
                let before: u64 = options
                    .iter()
                    .take_while(|o| o.name != chosen.name)
                    .map(|o| o.child.count())
                    .sum();
                index += before * rest;
            }
            DecisionNode::Numerical {
                name, grid, child, ..
            } => {
                let value = config.params[name];
                let pos = grid.iter().position(|g| *g == value).unwrap_or(0) as u64;
                index += pos * child.count() * rest;
            }
            _ => {}
        })?;
        Ok(index as usize)
    }

    /// Role tags of the categorical nodes and parameters on a configuration's
    /// path, keyed by role (falling back to the node name when untagged).
    pub fn roles_on_path(&self, config: &SolverConfig) -> Result<RoleView, SpaceError> {
        let mut view = RoleView::default();
        self.follow(config, |node, branch, _| match node {
            DecisionNode::Categorical { name, role, .. } => {
                let key = role.clone().unwrap_or_else(|| name.clone());
                let option = branch.map(|b| b.name.clone()).unwrap_or_default();
                view.choices.push((key, option));
            }
            DecisionNode::Numerical { name, role, .. } => {
                let key = role.clone().unwrap_or_else(|| name.clone());
                view.params.push((key, config.params[name]));
            }
            _ => {}
        })?;
        Ok(view)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.root).expect("tree serializes")
    }
}

/// Role-keyed view of a configuration's path, in path order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleView {
    pub choices: Vec<(String, String)>,
    pub params: Vec<(String, f64)>,
}

impl RoleView {
    pub fn choice(&self, role: &str) -> Option<&str> {
        self.choices
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, o)| o.as_str())
    }

    pub fn param(&self, role: &str) -> Option<f64> {
        self.params.iter().find(|(r, _)| r == role).map(|(_, v)| *v)
    }
}

/// Parse a JSON space definition and validate it.
pub fn parse_space(definition: &str) -> Result<ConfigSpace, SpaceError> {
    let root: DecisionNode =
        serde_json::from_str(definition).map_err(|e| SpaceError::Parse(e.to_string()))?;
    ConfigSpace::new(root)
}

fn join(path: &str, segment: &str) -> String {
    if path.is_empty() {
        segment.to_string()
    } else {
        format!("{path}/{segment}")
    }
}

fn validate_node(
    node: &DecisionNode,
    path: &str,
    names: &mut HashSet<String>,
) -> Result<(), SpaceError> {
    let invalid = |p: &str, reason: String| SpaceError::Invalid {
        path: if p.is_empty() { "<root>".into() } else { p.into() },
        reason,
    };
    match node {
        DecisionNode::Categorical { name, options, .. } => {
            let here = join(path, name);
            if name.is_empty() {
                return Err(invalid(&here, "empty node name".into()));
            }
            if !names.insert(name.clone()) {
                return Err(invalid(&here, format!("duplicate node name `{name}`")));
            }
            if options.is_empty() {
                return Err(invalid(&here, "categorical node has no options".into()));
            }
            let mut seen = HashSet::new();
            for o in options {
                if !seen.insert(o.name.as_str()) {
                    return Err(invalid(&here, format!("duplicate option `{}`", o.name)));
                }
                validate_node(&o.child, &join(&here, &o.name), names)?;
            }
            Ok(())
        }
        DecisionNode::Numerical {
            name, grid, child, ..
        } => {
            let here = join(path, name);
            if name.is_empty() {
                return Err(invalid(&here, "empty parameter name".into()));
            }
            if !names.insert(name.clone()) {
                return Err(invalid(&here, format!("duplicate parameter name `{name}`")));
            }
            if grid.is_empty() {
                return Err(invalid(&here, "empty grid".into()));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&here, "grid contains a non-finite value".into()));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(&here, "grid is not strictly increasing".into()));
            }
            validate_node(child, &here, names)
        }
        DecisionNode::Sequence { children, .. } => {
            if children.is_empty() {
                return Err(invalid(path, "sequence node has no children".into()));
            }
            for c in children {
                validate_node(c, path, names)?;
            }
            Ok(())
        }
        DecisionNode::Leaf { .. } => Ok(()),
    }
}

fn collect_slots(node: &DecisionNode, cats: &mut Vec<CatSlot>, nums: &mut Vec<NumSlot>) {
    match node {
        DecisionNode::Categorical { name, options, .. } => {
            for o in options {
                cats.push(CatSlot {
                    node: name.clone(),
                    option: o.name.clone(),
                });
            }
            for o in options {
                collect_slots(&o.child, cats, nums);
            }
        }
        DecisionNode::Numerical {
            name,
            role,
            grid,
            child,
        } => {
            nums.push(NumSlot {
                name: name.clone(),
                role: role.clone(),
                grid: grid.clone(),
            });
            collect_slots(child, cats, nums);
        }
        DecisionNode::Sequence { children, .. } => {
            for c in children {
                collect_slots(c, cats, nums);
            }
        }
        DecisionNode::Leaf { .. } => {}
    }
}

fn enumerate_into<'a>(
    pending: &mut Vec<&'a DecisionNode>,
    current: &mut SolverConfig,
    emit: &mut dyn FnMut(&SolverConfig),
) {
    let Some(node) = pending.pop() else {
        emit(current);
        return;
    };
    match node {
        DecisionNode::Categorical { name, options, .. } => {
            for o in options {
                current.path.push(PathChoice {
                    node: name.clone(),
                    option: o.name.clone(),
                });
                pending.push(&o.child);
                enumerate_into(pending, current, emit);
                pending.pop();
                current.path.pop();
            }
        }
        DecisionNode::Numerical {
            name, grid, child, ..
        } => {
            for &v in grid {
                current.params.insert(name.clone(), v);
                pending.push(child);
                enumerate_into(pending, current, emit);
                pending.pop();
            }
            current.params.remove(name);
        }
        DecisionNode::Sequence { children, .. } => {
            let depth = pending.len();
            pending.extend(children.iter().rev());
            enumerate_into(pending, current, emit);
            pending.truncate(depth);
        }
        DecisionNode::Leaf { .. } => enumerate_into(pending, current, emit),
    }
    pending.push(node);
}

/// Enumerated configurations with their encodings, cached for repeated scoring.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub configs: Vec<SolverConfig>,
    pub encodings: Vec<ConfigEncoding>,
}

impl CandidateSet {
    pub fn new(space: &ConfigSpace) -> Self {
        let configs = space.enumerate();
        let encodings = configs.iter().map(|c| space.encode_unchecked(c)).collect();
        Self { configs, encodings }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}
