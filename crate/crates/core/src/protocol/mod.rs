//! Centralized federated rounds and the layer-by-layer forest builder.
//!
//! Every node runs the same program. Each call to [`fl_centralized`] is one
//! round: the server broadcasts its local data, each client answers through
//! its callback, the server folds the answers through its callback and
//! broadcasts the aggregate, which every node then returns.

mod builder;
mod callbacks;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iforest::ModelError;
use crate::transport::{ClientTransport, Frame, NodeId, ServerTransport, TransportError, SERVER_ID};

pub use builder::{build_iforest_federated, build_itree_federated, round_limit, FederatedBuild, TreeTask};
pub use callbacks::{
    client_phase_cb, client_process_layer, client_processing, server_aggregate_layer,
    server_phase_cb, server_processing, PerTreePhaseState,
};
pub use run::{run_loopback, run_with_transports, ClientSpec, FederatedConfig, LoopbackOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum Phase {
    Initial = 0,
    ClientResting = 1,
    EndTree = 2,
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p as u8
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Phase::Initial),
            1 => Ok(Phase::ClientResting),
            2 => Ok(Phase::EndTree),
            other => Err(format!("unknown phase {other}")),
        }
    }
}

/// The `{phase, data}` envelope exchanged in every round.
///
/// `data` holds a split proposal, an aggregated split, a phase echo (the
/// phase code) or nothing once the tree is finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMessage {
    pub phase: Phase,
    pub data: Option<f64>,
}

impl RoundMessage {
    pub fn split(phase: Phase, value: f64) -> Self {
        Self { phase, data: Some(value) }
    }

    /// What a resting client sends instead of a proposal.
    pub fn resting() -> Self {
        Self { phase: Phase::ClientResting, data: Some(0.0) }
    }

    pub fn end_tree() -> Self {
        Self { phase: Phase::EndTree, data: None }
    }

    pub fn phase_echo(phase: Phase) -> Self {
        Self { phase, data: Some(f64::from(phase as u8)) }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node {node} lost lockstep: expected (tree {expected_tree}, seq {expected_seq}), got (tree {tree}, seq {seq})")]
    Lockstep { node: NodeId, expected_tree: u64, expected_seq: u64, tree: u64, seq: u64 },
    #[error("protocol stalled: tree {tree} exceeded {limit} rounds")]
    Stalled { tree: u64, limit: usize },
    #[error("node {node} received no split value for an active task in tree {tree}")]
    MissingSplit { node: NodeId, tree: u64 },
    #[error("client {node} has no private data")]
    EmptyPrivateData { node: NodeId },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Identity of a node within the federation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRole {
    pub node_id: NodeId,
    pub server_id: NodeId,
}

impl NodeRole {
    pub fn is_server(&self) -> bool {
        self.node_id == self.server_id
    }
}

enum Link {
    Server(Box<dyn ServerTransport>),
    Client(Box<dyn ClientTransport>),
}

/// A node's view of the federation: its transport plus round bookkeeping.
pub struct NodeCtx {
    link: Link,
    role: NodeRole,
    seq: u64,
    tree: u64,
    rounds: u64,
}

impl NodeCtx {
    pub fn server(transport: Box<dyn ServerTransport>) -> Self {
        Self {
            link: Link::Server(transport),
            role: NodeRole { node_id: SERVER_ID, server_id: SERVER_ID },
            seq: 0,
            tree: 0,
            rounds: 0,
        }
    }

    pub fn client(transport: Box<dyn ClientTransport>) -> Self {
        let node_id = transport.node_id();
        Self {
            link: Link::Client(transport),
            role: NodeRole { node_id, server_id: SERVER_ID },
            seq: 0,
            tree: 0,
            rounds: 0,
        }
    }

    pub fn role(&self) -> NodeRole {
        self.role
    }

    /// Number of completed `fl_centralized` calls.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub(crate) fn begin_tree(&mut self, tree: u64) {
        self.tree = tree;
    }

    fn expect_broadcast(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        let expected_seq = self.seq + 1;
        if frame.seq != expected_seq || frame.tree != self.tree {
            return Err(ProtocolError::Lockstep {
                node: self.role.node_id,
                expected_tree: self.tree,
                expected_seq,
                tree: frame.tree,
                seq: frame.seq,
            });
        }
        self.seq = frame.seq;
        Ok(())
    }
}

/// One centralized round.
///
/// Server: broadcast `local_data`, gather one reply per client, aggregate with
/// `server_cb`, broadcast and return the aggregate. Client: receive the
/// broadcast, answer with `client_cb(local_data, private_data, received)`,
/// then return the aggregate the server sends back.
pub fn fl_centralized<P, S, C>(
    ctx: &mut NodeCtx,
    server_cb: S,
    client_cb: C,
    local_data: RoundMessage,
    private_data: P,
) -> Result<RoundMessage, ProtocolError>
where
    S: FnOnce(&RoundMessage, &[RoundMessage]) -> RoundMessage,
    C: FnOnce(&RoundMessage, P, &RoundMessage) -> RoundMessage,
{
    let tree = ctx.tree;
    let out = match &mut ctx.link {
        Link::Server(t) => {
            ctx.seq += 1;
            let seq = ctx.seq;
            t.broadcast(&Frame::broadcast(seq, tree, local_data))?;
            let replies: Vec<RoundMessage> = t.gather(seq)?.iter().map(Frame::message).collect();
            let aggregate = server_cb(&local_data, &replies);
            ctx.seq += 1;
            t.broadcast(&Frame::broadcast(ctx.seq, tree, aggregate))?;
            aggregate
        }
        Link::Client(_) => {
            let frame = client_recv(ctx)?;
            ctx.expect_broadcast(&frame)?;
            let reply = client_cb(&local_data, private_data, &frame.message());
            if let Link::Client(t) = &mut ctx.link {
                t.reply(&Frame::reply(frame.seq, tree, reply))?;
            }
            let frame = client_recv(ctx)?;
            ctx.expect_broadcast(&frame)?;
            frame.message()
        }
    };
    ctx.rounds += 1;
    Ok(out)
}

fn client_recv(ctx: &mut NodeCtx) -> Result<Frame, ProtocolError> {
    match &mut ctx.link {
        Link::Client(t) => Ok(t.await_broadcast()?),
        Link::Server(_) => unreachable!("server never awaits broadcasts"),
    }
}
