use serde::{Deserialize, Serialize};

use super::ModelError;

/// Index of a node inside a [`Tree`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// A node is either a leaf or an internal split with exactly two children.
///
/// `size` on a leaf is the number of training readings that reached it on the
/// node that grew the tree. It is only consulted when leaf path adjustment is
/// switched on.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { size: usize },
    Split { value: f64, left: NodeId, right: NodeId },
}

impl TreeNode {
    pub fn split_value(&self) -> Option<f64> {
        match *self {
            TreeNode::Split { value, .. } => Some(value),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// One isolation tree stored as an arena; the root is always at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    train_size: usize,
}

impl Tree {
    /// A single-leaf tree grown from `train_size` readings.
    pub fn leaf(train_size: usize) -> Result<Self, ModelError> {
        if train_size == 0 {
            return Err(ModelError::EmptyTrainingSet);
        }
        Ok(Self { nodes: vec![TreeNode::Leaf { size: train_size }], train_size })
    }

    /// Turns the leaf `node` into a split and appends its two children as leaves.
    pub fn split(
        &mut self,
        node: NodeId,
        value: f64,
        left_size: usize,
        right_size: usize,
    ) -> Result<(NodeId, NodeId), ModelError> {
        match self.nodes.get(node.0) {
            Some(TreeNode::Leaf { .. }) => {}
            Some(TreeNode::Split { .. }) => {
                return Err(ModelError::Malformed(format!("node {} is already split", node.0)))
            }
            None => return Err(ModelError::Malformed(format!("node {} does not exist", node.0))),
        }
        if !value.is_finite() {
            return Err(ModelError::Malformed(format!("non-finite split value {value}")));
        }
        let left = NodeId(self.nodes.len());
        let right = NodeId(self.nodes.len() + 1);
        self.nodes.push(TreeNode::Leaf { size: left_size });
        self.nodes.push(TreeNode::Leaf { size: right_size });
        self.nodes[node.0] = TreeNode::Split { value, left, right };
        Ok((left, right))
    }

    pub(crate) fn set_leaf_size(&mut self, id: NodeId, size: usize) {
        if let TreeNode::Leaf { size: s } = &mut self.nodes[id.0] {
            *s = size;
        }
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Leaf reached by `x`: left when `x < split`, right otherwise.
    pub fn descend(&self, x: f64) -> (NodeId, usize) {
        let mut id = NodeId::ROOT;
        let mut edges = 0;
        while let TreeNode::Split { value, left, right } = self.nodes[id.0] {
            id = if x < value { left } else { right };
            edges += 1;
        }
        (id, edges)
    }

    /// Maximum number of edges from the root to any leaf.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(NodeId::ROOT, 0usize)];
        while let Some((id, d)) = stack.pop() {
            match self.nodes[id.0] {
                TreeNode::Leaf { .. } => deepest = deepest.max(d),
                TreeNode::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        deepest
    }
}

/// Which builder produced a forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builder {
    Federated,
    Baseline,
}

impl std::fmt::Display for Builder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Builder::Federated => "federated",
            Builder::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Builder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "federated" => Ok(Builder::Federated),
            "baseline" => Ok(Builder::Baseline),
            other => Err(format!("unknown builder `{other}`")),
        }
    }
}

/// An ordered collection of trees sharing a depth bound and training size.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    max_depth: usize,
    builder: Builder,
    seed: u64,
}

impl Forest {
    pub fn new(
        trees: Vec<Tree>,
        max_depth: usize,
        builder: Builder,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let first = trees.first().ok_or(ModelError::EmptyModel)?;
        let n = first.train_size();
        for (i, tree) in trees.iter().enumerate() {
            if tree.train_size() != n {
                return Err(ModelError::Malformed(format!(
                    "tree {i} trained on {} readings, expected {n}",
                    tree.train_size()
                )));
            }
            let depth = tree.depth();
            if depth > max_depth {
                return Err(ModelError::Malformed(format!(
                    "tree {i} has depth {depth} above max_depth {max_depth}"
                )));
            }
        }
        Ok(Self { trees, max_depth, builder, seed })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn builder(&self) -> Builder {
        self.builder
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Training-set size `n` used for score normalization.
    pub fn train_size(&self) -> usize {
        self.trees[0].train_size()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Tree::node_count).sum()
    }
}
