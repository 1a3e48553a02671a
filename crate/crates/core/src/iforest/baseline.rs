//! Sequential isolation forest used as the reference baseline.
//!
//! Trees are grown breadth-first over the full training set (no subsampling)
//! so the pop order, and therefore the per-node random streams, line up with
//! the federated builder.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

use super::split::{distinct_at_most_one, draw_open, partition_at, value_range};
use super::{Builder, Forest, ModelError, NodeId, Tree};
use crate::meter::{node_bytes, readings_bytes, MemoryMeter};
use crate::seed::{node_rng, rng_from_seed};

/// Grows one tree on `data`. Draws the tree seed from `rng`.
pub fn build_itree_baseline<R: Rng + ?Sized>(
    data: &[f64],
    max_depth: usize,
    rng: &mut R,
) -> Result<Tree, ModelError> {
    let tree_seed = rng.next_u64();
    grow_tree(data, max_depth, tree_seed, &MemoryMeter::new())
}

/// Grows `num_trees` trees, each on the full data set.
pub fn build_iforest_baseline(
    data: &[f64],
    num_trees: usize,
    max_depth: usize,
    seed: u64,
) -> Result<Forest, ModelError> {
    build_iforest_baseline_metered(data, num_trees, max_depth, seed, &MemoryMeter::new())
}

pub fn build_iforest_baseline_metered(
    data: &[f64],
    num_trees: usize,
    max_depth: usize,
    seed: u64,
    meter: &MemoryMeter,
) -> Result<Forest, ModelError> {
    if num_trees == 0 {
        return Err(ModelError::InvalidTreeCount);
    }
    meter.charge(readings_bytes(data.len()));
    let mut rng = rng_from_seed(seed);
    let trees = (0..num_trees)
        .map(|_| grow_tree(data, max_depth, rng.next_u64(), meter))
        .collect::<Result<Vec<_>, _>>();
    meter.release(readings_bytes(data.len()));
    Forest::new(trees?, max_depth, Builder::Baseline, seed)
}

pub(crate) fn grow_tree(
    data: &[f64],
    max_depth: usize,
    tree_seed: u64,
    meter: &MemoryMeter,
) -> Result<Tree, ModelError> {
    if max_depth == 0 {
        return Err(ModelError::InvalidDepth);
    }
    let mut tree = Tree::leaf(data.len())?;
    meter.charge(node_bytes(1));
    meter.charge(readings_bytes(data.len()));
    let mut queue = VecDeque::from([(NodeId::ROOT, data.to_vec(), 0usize)]);
    let mut ordinal = 0u64;

    while let Some((node, part, depth)) = queue.pop_front() {
        let mut node_rng = node_rng(tree_seed, ordinal);
        ordinal += 1;
        if depth >= max_depth || distinct_at_most_one(&part) {
            meter.release(readings_bytes(part.len()));
            continue;
        }
        let (lo, hi) = value_range(&part).expect("non-terminal partition is non-empty");
        let split = draw_open(lo, hi, &mut node_rng);
        let (left, right) = partition_at(&part, split);
        let (l, r) = tree.split(node, split, left.len(), right.len())?;
        meter.charge(node_bytes(2));
        queue.push_back((l, left, depth + 1));
        queue.push_back((r, right, depth + 1));
    }
    Ok(tree)
}
