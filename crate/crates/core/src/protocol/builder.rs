//! Federated tree and forest construction.
//!
//! Each loop iteration is two rounds: a split round where active clients
//! propose and the server averages, and a phase-sync round that tells every
//! node whether the tree is finished. Clients grow their local copy of the
//! tree breadth-first from a task queue; the server only aggregates.

use std::collections::VecDeque;

use rand::RngCore;

use super::callbacks::{
    client_phase_cb, client_processing, server_phase_cb, server_processing, PerTreePhaseState,
};
use super::{fl_centralized, NodeCtx, Phase, ProtocolError, RoundMessage};
use crate::iforest::{distinct_at_most_one, partition_at, value_range, Builder, Forest, ModelError, NodeId, Tree};
use crate::meter::{node_bytes, readings_bytes, MemoryMeter};
use crate::seed::{node_rng, rng_from_seed};

/// A node awaiting a split, with the client's readings that reach it.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTask {
    pub node: NodeId,
    pub partition: Vec<f64>,
    pub depth: usize,
}

/// Watchdog bound on loop iterations per tree: twice the node capacity of a
/// full tree of depth `max_depth`.
pub fn round_limit(max_depth: usize) -> usize {
    u32::try_from(max_depth + 1)
        .ok()
        .and_then(|s| 1usize.checked_shl(s))
        .map_or(usize::MAX, |cap| cap.saturating_mul(2))
}

/// Runs the tree-building loop on one node.
///
/// Returns the client's tree (`None` on the server) and the number of loop
/// iterations it took, the last being the `EndTree` iteration.
pub fn build_itree_federated(
    ctx: &mut NodeCtx,
    state: &mut PerTreePhaseState,
    private_data: &[f64],
    max_depth: usize,
    tree_seed: u64,
    meter: &MemoryMeter,
) -> Result<(Option<Tree>, usize), ProtocolError> {
    state.reset();
    let is_server = ctx.role().is_server();
    let full_range = value_range(private_data).unwrap_or((0.0, 0.0));
    let mut tree = None;
    let mut queue = VecDeque::new();
    if !is_server {
        tree = Some(Tree::leaf(private_data.len())?);
        meter.charge(node_bytes(1) + readings_bytes(private_data.len()));
        queue.push_back(TreeTask { node: NodeId::ROOT, partition: private_data.to_vec(), depth: 0 });
    }
    let limit = round_limit(max_depth);
    let mut ordinal = 0u64;
    let mut rounds = 0usize;

    loop {
        rounds += 1;
        if rounds > limit {
            return Err(ProtocolError::Stalled { tree: ctx.tree, limit });
        }
        let task = queue.pop_front();
        let mut rng = node_rng(tree_seed, ordinal);
        if task.is_some() {
            ordinal += 1;
        }

        let before = *state;
        let ret = fl_centralized(
            ctx,
            |_, msgs| server_processing(state, msgs),
            |_, part, _| client_processing(&before, part, full_range, &mut rng),
            RoundMessage::split(before.server_phase, 0.0),
            task.as_ref().map(|t| t.partition.as_slice()),
        )?;

        let after = *state;
        let phase = fl_centralized(
            ctx,
            |_, _| server_phase_cb(&after),
            |_, (), received| client_phase_cb(received),
            RoundMessage::phase_echo(ret.phase),
            (),
        )?;

        if phase.phase == Phase::EndTree {
            if !is_server && state.client_phase != Phase::ClientResting {
                return Err(ProtocolError::Config(format!(
                    "server ended tree {} while client {} was still building",
                    ctx.tree,
                    ctx.role().node_id
                )));
            }
            return Ok((tree, rounds));
        }
        if is_server || state.client_phase == Phase::ClientResting {
            continue;
        }
        let Some(task) = task else { continue };
        meter.release(readings_bytes(task.partition.len()));

        if task.depth >= max_depth || distinct_at_most_one(&task.partition) {
            if queue.is_empty() {
                state.client_phase = Phase::ClientResting;
            }
            continue;
        }
        let split = ret.data.ok_or(ProtocolError::MissingSplit {
            node: ctx.role().node_id,
            tree: ctx.tree,
        })?;
        let (left, right) = partition_at(&task.partition, split);
        let t = tree.as_mut().expect("clients own a tree");
        let (l, r) = t.split(task.node, split, left.len(), right.len())?;
        meter.charge(node_bytes(2) + readings_bytes(task.partition.len()));
        queue.push_back(TreeTask { node: l, partition: left, depth: task.depth + 1 });
        queue.push_back(TreeTask { node: r, partition: right, depth: task.depth + 1 });
    }
}

/// What one node ends up with after building a forest.
#[derive(Debug, Clone)]
pub struct FederatedBuild {
    /// The client's forest; `None` on the server.
    pub forest: Option<Forest>,
    /// Loop iterations spent on each tree.
    pub rounds_per_tree: Vec<usize>,
}

/// Builds `num_trees` trees in sequence, resetting the phase state each time.
///
/// `seed` drives the client's split draws; the server ignores it.
pub fn build_iforest_federated(
    ctx: &mut NodeCtx,
    private_data: &[f64],
    num_trees: usize,
    max_depth: usize,
    seed: u64,
    meter: &MemoryMeter,
) -> Result<FederatedBuild, ProtocolError> {
    if num_trees == 0 {
        return Err(ModelError::InvalidTreeCount.into());
    }
    if max_depth == 0 {
        return Err(ModelError::InvalidDepth.into());
    }
    let is_server = ctx.role().is_server();
    if !is_server && private_data.is_empty() {
        return Err(ProtocolError::EmptyPrivateData { node: ctx.role().node_id });
    }
    if !is_server {
        meter.charge(readings_bytes(private_data.len()));
    }
    let mut rng = rng_from_seed(seed);
    let mut state = PerTreePhaseState::default();
    let mut trees = Vec::with_capacity(if is_server { 0 } else { num_trees });
    let mut rounds_per_tree = Vec::with_capacity(num_trees);

    for t in 0..num_trees {
        ctx.begin_tree(t as u64);
        let tree_seed = if is_server { 0 } else { rng.next_u64() };
        let (tree, rounds) =
            build_itree_federated(ctx, &mut state, private_data, max_depth, tree_seed, meter)?;
        rounds_per_tree.push(rounds);
        trees.extend(tree);
    }
    if !is_server {
        meter.release(readings_bytes(private_data.len()));
    }

    let forest = if is_server {
        None
    } else {
        Some(Forest::new(trees, max_depth, Builder::Federated, seed)?)
    };
    Ok(FederatedBuild { forest, rounds_per_tree })
}
