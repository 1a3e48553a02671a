//! In-process backend: one channel pair per client.
//!
//! Frames are passed by value. Replies are collected per client in id order,
//! so the gathered batch never depends on thread scheduling.

use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::{
    check_reply, BroadcastGuard, ClientTransport, Frame, NodeId, ServerTransport, TransportError,
};

pub struct LoopbackServer {
    ids: Vec<NodeId>,
    to_clients: Vec<Sender<Frame>>,
    from_clients: Vec<Receiver<Frame>>,
    timeout: Option<Duration>,
}

pub struct LoopbackClient {
    id: NodeId,
    to_server: Sender<Frame>,
    from_server: Receiver<Frame>,
    timeout: Option<Duration>,
    guard: BroadcastGuard,
}

/// Wires up a server and `n_clients` clients with ids `1..=n_clients`.
///
/// `timeout` of `None` waits indefinitely.
pub fn network(
    n_clients: usize,
    timeout: Option<Duration>,
) -> Result<(LoopbackServer, Vec<LoopbackClient>), TransportError> {
    if n_clients == 0 {
        return Err(TransportError::Config("at least one client is required".into()));
    }
    let mut server = LoopbackServer {
        ids: Vec::with_capacity(n_clients),
        to_clients: Vec::with_capacity(n_clients),
        from_clients: Vec::with_capacity(n_clients),
        timeout,
    };
    let mut clients = Vec::with_capacity(n_clients);
    for i in 1..=n_clients {
        let id = NodeId::try_from(i)
            .map_err(|_| TransportError::Config(format!("too many clients: {n_clients}")))?;
        let (down_tx, down_rx) = channel();
        let (up_tx, up_rx) = channel();
        server.ids.push(id);
        server.to_clients.push(down_tx);
        server.from_clients.push(up_rx);
        clients.push(LoopbackClient {
            id,
            to_server: up_tx,
            from_server: down_rx,
            timeout,
            guard: BroadcastGuard::default(),
        });
    }
    Ok((server, clients))
}

fn recv(
    rx: &Receiver<Frame>,
    deadline: Option<Instant>,
    peer: NodeId,
) -> Result<Frame, TransportError> {
    match deadline {
        None => rx.recv().map_err(|_| TransportError::Disconnected { node: peer }),
        Some(deadline) => {
            let left = deadline.saturating_duration_since(Instant::now());
            rx.recv_timeout(left).map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout { node: peer },
                RecvTimeoutError::Disconnected => TransportError::Disconnected { node: peer },
            })
        }
    }
}

impl ServerTransport for LoopbackServer {
    fn clients(&self) -> &[NodeId] {
        &self.ids
    }

    fn broadcast(&mut self, frame: &Frame) -> Result<(), TransportError> {
        for (tx, &id) in self.to_clients.iter().zip(&self.ids) {
            tx.send(*frame).map_err(|_| TransportError::Disconnected { node: id })?;
        }
        Ok(())
    }

    fn gather(&mut self, seq: u64) -> Result<Vec<Frame>, TransportError> {
        let deadline = self.timeout.map(|t| Instant::now() + t);
        self.from_clients
            .iter()
            .zip(&self.ids)
            .map(|(rx, &id)| {
                let frame = recv(rx, deadline, id)?;
                check_reply(id, &frame, seq)?;
                Ok(frame)
            })
            .collect()
    }
}

impl ClientTransport for LoopbackClient {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn await_broadcast(&mut self) -> Result<Frame, TransportError> {
        let deadline = self.timeout.map(|t| Instant::now() + t);
        let frame = recv(&self.from_server, deadline, super::SERVER_ID)?;
        self.guard.admit(self.id, &frame)?;
        Ok(frame)
    }

    fn reply(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.to_server
            .send(*frame)
            .map_err(|_| TransportError::Disconnected { node: super::SERVER_ID })
    }
}
