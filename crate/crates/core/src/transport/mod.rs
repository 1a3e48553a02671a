//! Round-synchronous message exchange between the server and its clients.
//!
//! Every round is a server broadcast followed by exactly one reply per
//! client. Frames carry a sequence number; replies echo the sequence number
//! of the broadcast they answer.
//!
//! Wire format (TCP): a 4-byte big-endian payload length followed by a UTF-8
//! JSON object `{"seq":u64,"tree":u64,"kind":"b"|"r","phase":0|1|2,"data":number|null}`.

pub mod loopback;
pub mod tcp;

use std::io::{self, Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Phase, RoundMessage};

pub type NodeId = u32;

/// The edge server always has id 0; clients are numbered from 1.
pub const SERVER_ID: NodeId = 0;

/// Default reply timeout for network backends.
pub const DEFAULT_TCP_TIMEOUT: Duration = Duration::from_secs(30);

/// Upper bound on a single frame payload; round frames are a few dozen bytes.
pub const MAX_FRAME_LEN: u32 = 64 * 1024;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport configuration error: {0}")]
    Config(String),
    #[error("timed out waiting for node {node}")]
    Timeout { node: NodeId },
    #[error("node {node} disconnected")]
    Disconnected { node: NodeId },
    #[error("node {node} replied to seq {got}, expected seq {expected}")]
    StaleReply { node: NodeId, expected: u64, got: u64 },
    #[error("node {node} sent an out-of-order frame: {detail}")]
    OutOfOrder { node: NodeId, detail: String },
    #[error("frame codec error: {0}")]
    Codec(String),
    #[error("i/o error talking to node {node}: {source}")]
    Io {
        node: NodeId,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    #[serde(rename = "b")]
    Broadcast,
    #[serde(rename = "r")]
    Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub seq: u64,
    pub tree: u64,
    pub kind: FrameKind,
    pub phase: Phase,
    pub data: Option<f64>,
}

impl Frame {
    pub fn broadcast(seq: u64, tree: u64, msg: RoundMessage) -> Self {
        Self { seq, tree, kind: FrameKind::Broadcast, phase: msg.phase, data: msg.data }
    }

    pub fn reply(seq: u64, tree: u64, msg: RoundMessage) -> Self {
        Self { seq, tree, kind: FrameKind::Reply, phase: msg.phase, data: msg.data }
    }

    pub fn message(&self) -> RoundMessage {
        RoundMessage { phase: self.phase, data: self.data }
    }
}

/// Server side of a round: fan out one frame, then collect one reply per client.
pub trait ServerTransport: Send {
    /// Client ids in ascending order.
    fn clients(&self) -> &[NodeId];

    fn broadcast(&mut self, frame: &Frame) -> Result<(), TransportError>;

    /// Blocks until every client has answered broadcast `seq`. Replies are
    /// returned ordered by client id.
    fn gather(&mut self, seq: u64) -> Result<Vec<Frame>, TransportError>;
}

/// Client side of a round.
pub trait ClientTransport: Send {
    fn node_id(&self) -> NodeId;

    fn await_broadcast(&mut self) -> Result<Frame, TransportError>;

    fn reply(&mut self, frame: &Frame) -> Result<(), TransportError>;
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, TransportError> {
    let body = serde_json::to_vec(frame).map_err(|e| TransportError::Codec(e.to_string()))?;
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME_LEN)
        .ok_or_else(|| TransportError::Codec(format!("frame of {} bytes too large", body.len())))?;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode_payload(body: &[u8]) -> Result<Frame, TransportError> {
    serde_json::from_slice(body).map_err(|e| TransportError::Codec(e.to_string()))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame, peer: NodeId) -> Result<(), TransportError> {
    let bytes = encode_frame(frame)?;
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| io_error(peer, e))
}

pub fn read_frame<R: Read>(r: &mut R, peer: NodeId) -> Result<Frame, TransportError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|e| io_error(peer, e))?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(TransportError::Codec(format!("frame length {len} exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| io_error(peer, e))?;
    decode_payload(&body)
}

fn io_error(node: NodeId, e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout { node },
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => TransportError::Disconnected { node },
        _ => TransportError::Io { node, source: e },
    }
}

/// Checks a batch of replies against the broadcast they should answer.
fn check_reply(node: NodeId, frame: &Frame, seq: u64) -> Result<(), TransportError> {
    if frame.kind != FrameKind::Reply {
        return Err(TransportError::OutOfOrder {
            node,
            detail: "expected a reply frame".into(),
        });
    }
    if frame.seq != seq {
        return Err(TransportError::StaleReply { node, expected: seq, got: frame.seq });
    }
    Ok(())
}

/// Tracks the last broadcast seen by a client; broadcasts must strictly increase.
#[derive(Debug, Default)]
struct BroadcastGuard {
    last: Option<u64>,
}

impl BroadcastGuard {
    fn admit(&mut self, node: NodeId, frame: &Frame) -> Result<(), TransportError> {
        if frame.kind != FrameKind::Broadcast {
            return Err(TransportError::OutOfOrder {
                node,
                detail: "expected a broadcast frame".into(),
            });
        }
        if let Some(last) = self.last {
            if frame.seq <= last {
                return Err(TransportError::OutOfOrder {
                    node,
                    detail: format!("broadcast seq {} after {last}", frame.seq),
                });
            }
        }
        self.last = Some(frame.seq);
        Ok(())
    }
}
