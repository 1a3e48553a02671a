//! Drives a whole federation from one process, one thread per node.

use std::thread;
use std::time::Duration;

use super::builder::build_iforest_federated;
use super::{NodeCtx, ProtocolError};
use crate::iforest::Forest;
use crate::meter::MemoryMeter;
use crate::transport::{loopback, ClientTransport, ServerTransport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FederatedConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    /// Reply timeout; `None` waits forever.
    pub timeout: Option<Duration>,
}

/// Private data and split seed of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSpec {
    pub data: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LoopbackOutcome {
    /// One forest per client, in client id order.
    pub forests: Vec<Forest>,
    /// Loop iterations per tree as seen by the server.
    pub rounds_per_tree: Vec<usize>,
    /// Peak working-set bytes per client.
    pub peak_memory: Vec<usize>,
}

pub fn run_loopback(clients: &[ClientSpec], cfg: &FederatedConfig) -> Result<LoopbackOutcome, ProtocolError> {
    let (server, ends) = loopback::network(clients.len(), cfg.timeout)?;
    let ends = ends.into_iter().map(|c| Box::new(c) as Box<dyn ClientTransport>).collect();
    run_with_transports(Box::new(server), ends, clients, cfg)
}

/// Runs the server and every client on scoped threads over the given
/// transports. `transports[i]` carries `clients[i]`.
pub fn run_with_transports(
    server: Box<dyn ServerTransport>,
    transports: Vec<Box<dyn ClientTransport>>,
    clients: &[ClientSpec],
    cfg: &FederatedConfig,
) -> Result<LoopbackOutcome, ProtocolError> {
    if transports.len() != clients.len() {
        return Err(ProtocolError::Config(format!(
            "{} transports for {} clients",
            transports.len(),
            clients.len()
        )));
    }
    let meters: Vec<MemoryMeter> = clients.iter().map(|_| MemoryMeter::new()).collect();
    let (server_result, client_results) = thread::scope(|s| {
        let handles: Vec<_> = transports
            .into_iter()
            .zip(clients)
            .zip(&meters)
            .map(|((t, spec), meter)| {
                s.spawn(move || {
                    let mut ctx = NodeCtx::client(t);
                    build_iforest_federated(&mut ctx, &spec.data, cfg.num_trees, cfg.max_depth, spec.seed, meter)
                })
            })
            .collect();
        let mut ctx = NodeCtx::server(server);
        let server_result =
            build_iforest_federated(&mut ctx, &[], cfg.num_trees, cfg.max_depth, 0, &MemoryMeter::new());
        // Dropping the server context closes its channels so blocked clients wake up.
        drop(ctx);
        let client_results: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("client thread panicked"))
            .collect();
        (server_result, client_results)
    });

    let mut errors: Vec<ProtocolError> = Vec::new();
    let server_build = server_result.map_err(|e| errors.push(e)).ok();
    let mut forests = Vec::with_capacity(clients.len());
    for r in client_results {
        match r {
            Ok(b) => forests.extend(b.forest),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        // Report the root cause rather than the disconnects it triggered.
        let pos = errors
            .iter()
            .position(|e| !matches!(e, ProtocolError::Transport(TransportError::Disconnected { .. })))
            .unwrap_or(0);
        return Err(errors.swap_remove(pos));
    }
    Ok(LoopbackOutcome {
        forests,
        rounds_per_tree: server_build.map(|b| b.rounds_per_tree).unwrap_or_default(),
        peak_memory: meters.iter().map(MemoryMeter::peak).collect(),
    })
}
