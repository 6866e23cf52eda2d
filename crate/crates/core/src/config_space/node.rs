use serde::{Deserialize, Serialize};

/// One node of the solver decision tree.
///
/// Categorical nodes pick exactly one of their options, numerical nodes fix a
/// parameter to one value of a pre-discretized grid and continue into a single
/// child, and leaves terminate a configuration. A sequence node makes all of
/// its children part of the configuration, one after the other, so that
/// independent sub-decisions do not have to be duplicated under every branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecisionNode {
    Categorical {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
        options: Vec<OptionBranch>,
    },
    Numerical {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
        grid: Vec<f64>,
        #[serde(default = "leaf_box", skip_serializing_if = "DecisionNode::is_boxed_leaf")]
        child: Box<DecisionNode>,
    },
    Sequence {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        children: Vec<DecisionNode>,
    },
    Leaf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

/// A named option of a categorical node together with the subtree it opens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionBranch {
    pub name: String,
    #[serde(default = "DecisionNode::leaf", skip_serializing_if = "DecisionNode::is_leaf")]
    pub child: DecisionNode,
}

fn leaf_box() -> Box<DecisionNode> {
    Box::new(DecisionNode::leaf())
}

impl DecisionNode {
    pub fn leaf() -> Self {
        DecisionNode::Leaf { name: None }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, DecisionNode::Leaf { name: None })
    }

    fn is_boxed_leaf(node: &Box<DecisionNode>) -> bool {
        node.is_leaf()
    }

    pub fn categorical(name: &str, options: Vec<OptionBranch>) -> Self {
        DecisionNode::Categorical {
            name: name.to_string(),
            role: None,
            options,
        }
    }

    pub fn sequence(children: Vec<DecisionNode>) -> Self {
        DecisionNode::Sequence {
            name: None,
            children,
        }
    }

    pub fn numerical(name: &str, grid: Vec<f64>, child: DecisionNode) -> Self {
        DecisionNode::Numerical {
            name: name.to_string(),
            role: None,
            grid,
            child: Box::new(child),
        }
    }

    /// Attach a role tag used by solver builders to interpret the node.
    pub fn with_role(mut self, new_role: &str) -> Self {
        match &mut self {
            DecisionNode::Categorical { role, .. } | DecisionNode::Numerical { role, .. } => {
                *role = Some(new_role.to_string())
            }
            DecisionNode::Sequence { .. } | DecisionNode::Leaf { .. } => {}
        }
        self
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            DecisionNode::Categorical { name, .. } | DecisionNode::Numerical { name, .. } => {
                Some(name)
            }
            DecisionNode::Sequence { name, .. } | DecisionNode::Leaf { name } => name.as_deref(),
        }
    }

    pub fn role(&self) -> Option<&str> {
        match self {
            DecisionNode::Categorical { role, .. } | DecisionNode::Numerical { role, .. } => {
                role.as_deref()
            }
            DecisionNode::Sequence { .. } | DecisionNode::Leaf { .. } => None,
        }
    }

    /// Number of complete configurations below this node.
    pub fn count(&self) -> u64 {
        match self {
            DecisionNode::Categorical { options, .. } => options
                .iter()
                .map(|o| o.child.count())
                .fold(0u64, u64::saturating_add),
            DecisionNode::Numerical { grid, child, .. } => {
                (grid.len() as u64).saturating_mul(child.count())
            }
            DecisionNode::Sequence { children, .. } => children
                .iter()
                .map(|c| c.count())
                .fold(1u64, u64::saturating_mul),
            DecisionNode::Leaf { .. } => 1,
        }
    }
}

impl OptionBranch {
    pub fn new(name: &str, child: DecisionNode) -> Self {
        Self {
            name: name.to_string(),
            child,
        }
    }

    pub fn terminal(name: &str) -> Self {
        Self::new(name, DecisionNode::leaf())
    }
}
