//! TCP backend with static membership.
//!
//! Clients connect and register by sending a reply frame with `seq` 0 whose
//! `data` is their node id. The server does not start round 0 until every
//! configured client has registered.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::{
    check_reply, read_frame, write_frame, BroadcastGuard, ClientTransport, Frame, NodeId,
    ServerTransport, TransportError, SERVER_ID,
};
use crate::protocol::{Phase, RoundMessage};

const POLL: Duration = Duration::from_millis(5);

fn registration(id: NodeId) -> Frame {
    Frame::reply(0, 0, RoundMessage { phase: Phase::Initial, data: Some(f64::from(id)) })
}

fn remaining(deadline: Option<Instant>, node: NodeId) -> Result<Option<Duration>, TransportError> {
    match deadline {
        None => Ok(None),
        Some(d) => {
            let left = d.saturating_duration_since(Instant::now());
            if left.is_zero() {
                Err(TransportError::Timeout { node })
            } else {
                Ok(Some(left))
            }
        }
    }
}

fn io_err(node: NodeId) -> impl FnOnce(io::Error) -> TransportError {
    move |source| TransportError::Io { node, source }
}

pub struct TcpServer {
    ids: Vec<NodeId>,
    streams: Vec<TcpStream>,
    timeout: Option<Duration>,
}

impl TcpServer {
    /// Accepts one registration from each of `expected` (ids must be unique
    /// and non-zero). Times out naming the first client still missing.
    pub fn accept_clients(
        listener: &TcpListener,
        expected: &[NodeId],
        timeout: Option<Duration>,
    ) -> Result<Self, TransportError> {
        if expected.is_empty() {
            return Err(TransportError::Config("at least one client is required".into()));
        }
        let mut ids = expected.to_vec();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.contains(&SERVER_ID) {
            return Err(TransportError::Config(format!("invalid client id list {expected:?}")));
        }
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut slots: Vec<Option<TcpStream>> = ids.iter().map(|_| None).collect();
        listener.set_nonblocking(true).map_err(io_err(SERVER_ID))?;

        while let Some(missing) = slots.iter().position(Option::is_none).map(|i| ids[i]) {
            let mut stream = match listener.accept() {
                Ok((s, _)) => s,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    remaining(deadline, missing)?;
                    thread::sleep(POLL);
                    continue;
                }
                Err(e) => return Err(io_err(SERVER_ID)(e)),
            };
            stream.set_nonblocking(false).map_err(io_err(missing))?;
            stream.set_nodelay(true).map_err(io_err(missing))?;
            stream.set_read_timeout(remaining(deadline, missing)?).map_err(io_err(missing))?;
            let hello = read_frame(&mut stream, missing)?;
            let id = hello
                .data
                .filter(|_| hello.seq == 0)
                .and_then(|d| if d.fract() == 0.0 && d >= 0.0 { Some(d as NodeId) } else { None })
                .ok_or_else(|| TransportError::Config("malformed registration frame".into()))?;
            let slot = ids
                .iter()
                .position(|&x| x == id)
                .ok_or_else(|| TransportError::Config(format!("unexpected client id {id}")))?;
            if slots[slot].is_some() {
                return Err(TransportError::Config(format!("client {id} registered twice")));
            }
            log::debug!("client {id} registered");
            slots[slot] = Some(stream);
        }
        listener.set_nonblocking(false).map_err(io_err(SERVER_ID))?;
        Ok(Self { ids, streams: slots.into_iter().flatten().collect(), timeout })
    }
}

impl ServerTransport for TcpServer {
    fn clients(&self) -> &[NodeId] {
        &self.ids
    }

    fn broadcast(&mut self, frame: &Frame) -> Result<(), TransportError> {
        for (stream, &id) in self.streams.iter_mut().zip(&self.ids) {
            write_frame(stream, frame, id)?;
        }
        Ok(())
    }

    fn gather(&mut self, seq: u64) -> Result<Vec<Frame>, TransportError> {
        let deadline = self.timeout.map(|t| Instant::now() + t);
        let mut out = Vec::with_capacity(self.ids.len());
        for (stream, &id) in self.streams.iter_mut().zip(&self.ids) {
            stream.set_read_timeout(remaining(deadline, id)?).map_err(io_err(id))?;
            let frame = read_frame(stream, id)?;
            check_reply(id, &frame, seq)?;
            out.push(frame);
        }
        Ok(out)
    }
}

pub struct TcpClient {
    id: NodeId,
    stream: TcpStream,
    timeout: Option<Duration>,
    guard: BroadcastGuard,
}

impl TcpClient {
    /// Connects to the server, retrying until `timeout` elapses, and registers.
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        id: NodeId,
        timeout: Option<Duration>,
    ) -> Result<Self, TransportError> {
        if id == SERVER_ID {
            return Err(TransportError::Config("client id 0 is reserved for the server".into()));
        }
        let addrs: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| TransportError::Config(format!("bad server address: {e}")))?
            .collect();
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut stream = loop {
            match TcpStream::connect(&addrs[..]) {
                Ok(s) => break s,
                Err(e) => {
                    log::trace!("connect failed: {e}");
                    remaining(deadline, SERVER_ID)?;
                    thread::sleep(POLL * 4);
                }
            }
        };
        stream.set_nodelay(true).map_err(io_err(SERVER_ID))?;
        write_frame(&mut stream, &registration(id), SERVER_ID)?;
        Ok(Self { id, stream, timeout, guard: BroadcastGuard::default() })
    }
}

impl ClientTransport for TcpClient {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn await_broadcast(&mut self) -> Result<Frame, TransportError> {
        self.stream.set_read_timeout(self.timeout).map_err(io_err(SERVER_ID))?;
        let frame = read_frame(&mut self.stream, SERVER_ID)?;
        self.guard.admit(self.id, &frame)?;
        Ok(frame)
    }

    fn reply(&mut self, frame: &Frame) -> Result<(), TransportError> {
        write_frame(&mut self.stream, frame, SERVER_ID)
    }
}
