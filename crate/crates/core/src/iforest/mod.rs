//! Isolation-tree model, anomaly scoring and the sequential baseline builder.
//!
//! Scores follow the usual isolation-forest convention: `2^(-E[h(x)] / c(n))`,
//! close to 1 for readings that isolate quickly and around 0.5 or below for
//! ordinary ones.

mod baseline;
mod model_file;
mod split;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{build_iforest_baseline, build_iforest_baseline_metered, build_itree_baseline};
pub use model_file::{deserialize_model, serialize_model, MODEL_FORMAT};
pub use split::{distinct_at_most_one, draw_open, partition_at, value_range};
pub use tree::{Builder, Forest, NodeId, Tree, TreeNode};

/// Constant used in the normalization factor, kept at three decimals.
pub const EULER_APPROX: f64 = 0.577;

/// Threshold chosen at the best F1 point in the reference evaluation.
pub const DEFAULT_THRESHOLD: f64 = 0.8265;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty model")]
    EmptyModel,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("max_depth must be at least 1")]
    InvalidDepth,
    #[error("num_trees must be at least 1")]
    InvalidTreeCount,
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

/// Average path length of an unsuccessful BST search over `n` items.
///
/// Returns 0 for `n <= 1`, where `ln(n - 1)` is undefined.
pub fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * ((n - 1.0).ln() + EULER_APPROX) - 2.0 * (n - 1.0) / n
}

/// Edges from the root to the leaf that `x` lands in.
pub fn path_length(tree: &Tree, x: f64) -> usize {
    tree.descend(x).1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Add `c(leaf size)` at leaves that still held more than one reading.
    /// Off by default: federated clients only share split values.
    pub leaf_adjustment: bool,
}

fn adjusted_path_length(tree: &Tree, x: f64, opts: ScoreOptions) -> f64 {
    let (leaf, edges) = tree.descend(x);
    let mut h = edges as f64;
    if opts.leaf_adjustment {
        if let TreeNode::Leaf { size } = *tree.node(leaf) {
            h += c_factor(size);
        }
    }
    h
}

/// Anomaly score in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Score(f64);

impl Score {
    /// Score for a mean path length over trees trained on `n` readings.
    pub fn from_mean_path(mean_path: f64, n: usize) -> Self {
        let c = c_factor(n);
        if c <= 0.0 {
            return Score(1.0);
        }
        Score(2f64.powf(-mean_path / c))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Anomaly,
    Normal,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Anomaly => "anomaly",
            Label::Normal => "normal",
        })
    }
}

/// Scores `x` against `trees`, each trained on `n` readings.
pub fn anomaly_score(trees: &[Tree], x: f64, n: usize) -> Result<Score, ModelError> {
    anomaly_score_with(trees, x, n, ScoreOptions::default())
}

pub fn anomaly_score_with(
    trees: &[Tree],
    x: f64,
    n: usize,
    opts: ScoreOptions,
) -> Result<Score, ModelError> {
    if trees.is_empty() {
        return Err(ModelError::EmptyModel);
    }
    let total: f64 = trees.iter().map(|t| adjusted_path_length(t, x, opts)).sum();
    Ok(Score::from_mean_path(total / trees.len() as f64, n))
}

/// Readings at or above the threshold are anomalies.
pub fn classify(score: Score, threshold: f64) -> Label {
    if score.value() >= threshold {
        Label::Anomaly
    } else {
        Label::Normal
    }
}

impl Forest {
    pub fn score(&self, x: f64) -> Score {
        self.score_with(x, ScoreOptions::default())
    }

    pub fn score_with(&self, x: f64, opts: ScoreOptions) -> Score {
        anomaly_score_with(self.trees(), x, self.train_size(), opts)
            .expect("forest is non-empty by construction")
    }

    pub fn mean_path_length(&self, x: f64) -> f64 {
        let total: usize = self.trees().iter().map(|t| path_length(t, x)).sum();
        total as f64 / self.trees().len() as f64
    }
}
