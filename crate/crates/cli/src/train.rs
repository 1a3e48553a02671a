use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::Args;
use pfliforest::eval::{gen_training_set, DataConfig};
use pfliforest::iforest::{build_iforest_baseline_metered, serialize_model, Forest};
use pfliforest::meter::MemoryMeter;
use pfliforest::protocol::{build_iforest_federated, run_loopback, ClientSpec, FederatedConfig, NodeCtx};
use pfliforest::seed::{derive_seed, rng_from_seed};
use pfliforest::transport::tcp::{TcpClient, TcpServer};

use crate::config::{BuilderChoice, Role, RunConfig, TransportKind};
use crate::error::{usage, CliResult, UsageContext};
use crate::pick;

const TAG_DATA: u64 = 11;
const TAG_SPLITS: u64 = 12;
const TAG_BASELINE: u64 = 13;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub role: Option<Role>,
    #[arg(long, value_enum, env = "FEDFOREST_TRANSPORT")]
    pub transport: Option<TransportKind>,
    /// Client ids a TCP server waits for.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Option<Vec<u32>>,
    /// Address a TCP server listens on.
    #[arg(long)]
    pub listen: Option<String>,
    /// Server address for a TCP client.
    #[arg(long)]
    pub connect: Option<String>,
    /// This client's id (TCP client role).
    #[arg(long)]
    pub id: Option<u32>,
    #[arg(long, value_enum)]
    pub builder: Option<BuilderChoice>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Readings generated per client when no data files are given.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// One file per client, one reading per line.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub data: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

struct Params {
    seed: u64,
    trees: usize,
    depth: usize,
    train_size: usize,
    out_dir: PathBuf,
    timeout: Option<Duration>,
}

pub fn run(args: TrainArgs, file: &RunConfig) -> CliResult<()> {
    let role = pick(args.role, file.role.clone(), Role::AllInOne);
    let default_transport = if role == Role::AllInOne { TransportKind::Loopback } else { TransportKind::Tcp };
    let transport = pick(args.transport, file.transport, default_transport);
    match (role, transport) {
        (Role::AllInOne, TransportKind::Tcp) => return usage("all-in-one runs use the loopback transport"),
        (Role::Server | Role::Client, TransportKind::Loopback) => {
            return usage("server and client roles need the tcp transport")
        }
        _ => {}
    }
    let builder = pick(args.builder, file.builder, BuilderChoice::Federated);
    let p = Params {
        seed: pick(args.seed, file.seed, 0),
        trees: pick(args.trees, file.trees, 25),
        depth: pick(args.depth, file.depth, 6),
        train_size: pick(args.train_size, file.train_size, 200),
        out_dir: pick(args.out_dir, file.out_dir.clone(), PathBuf::from("models")),
        timeout: args
            .timeout_secs
            .or(file.timeout_secs)
            .or((transport == TransportKind::Tcp).then_some(30))
            .map(Duration::from_secs),
    };
    if p.trees == 0 || p.depth == 0 || p.train_size == 0 {
        return usage("--trees, --depth and --train-size must be at least 1");
    }
    let data_files = args.data.or(file.data.clone()).unwrap_or_default();

    match role {
        Role::AllInOne => {
            let clients = match (args.clients.or(file.clients), data_files.len()) {
                (Some(n), files) if files > 0 && n != files => {
                    return usage(format!("--clients {n} does not match {files} data files"))
                }
                (_, files) if files > 0 => files,
                (n, _) => n.unwrap_or(2),
            };
            if clients == 0 {
                return usage("at least one client is required");
            }
            let data = (1..=clients as u32)
                .map(|id| client_data(data_files.get(id as usize - 1).map(PathBuf::as_path), id, &p))
                .collect::<CliResult<Vec<_>>>()?;
            all_in_one(&data, builder, &p)
        }
        Role::Server => {
            if builder != BuilderChoice::Federated {
                return usage("only federated builds run over tcp");
            }
            let listen = args.listen.or(file.listen.clone());
            let nodes = args.nodes.or(file.nodes.clone());
            let (Some(listen), Some(nodes)) = (listen, nodes) else {
                return usage("the server role needs --listen and --nodes");
            };
            server(&listen, &nodes, &p)
        }
        Role::Client => {
            if builder != BuilderChoice::Federated {
                return usage("only federated builds run over tcp");
            }
            let connect = args.connect.or(file.connect.clone());
            let id = args.id.or(file.id);
            let (Some(connect), Some(id)) = (connect, id) else {
                return usage("the client role needs --connect and --id");
            };
            if data_files.len() > 1 {
                return usage("a client takes at most one data file");
            }
            let data = client_data(data_files.first().map(PathBuf::as_path), id, &p)?;
            client(&connect, id, data, &p)
        }
    }
}

/// Reads one reading per line; blank lines and `#` comments are skipped.
pub fn read_readings(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read data file {}", path.display()))
        .or_usage()?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("{}:{}: `{line}` is not a number", path.display(), i + 1))
            .or_usage()?;
        if !v.is_finite() {
            return usage(format!("{}:{}: reading must be finite", path.display(), i + 1));
        }
        out.push(v);
    }
    if out.is_empty() {
        return usage(format!("data file {} has no readings", path.display()));
    }
    Ok(out)
}

fn client_data(file: Option<&Path>, id: u32, p: &Params) -> CliResult<Vec<f64>> {
    match file {
        Some(path) => read_readings(path),
        None => {
            let mut rng = rng_from_seed(derive_seed(p.seed, &[TAG_DATA, id as u64]));
            Ok(gen_training_set(p.train_size, &DataConfig::default(), &mut rng).map_err(anyhow::Error::from)?)
        }
    }
}

fn client_seed(seed: u64, id: u32) -> u64 {
    derive_seed(seed, &[TAG_SPLITS, id as u64])
}

/// Writes next to the target and renames, so readers never see half a model.
fn write_model(dir: &Path, name: &str, forest: &Forest) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, serialize_model(forest)).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, &path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn report_cost(label: &str, peak: usize, elapsed: Duration, rounds: Option<usize>) {
    let rounds = rounds.map(|r| format!(" max_rounds_per_tree={r}")).unwrap_or_default();
    println!(
        "{label}: peak_memory_bytes={peak} build_time_seconds={:.6}{rounds}",
        elapsed.as_secs_f64()
    );
}

fn all_in_one(data: &[Vec<f64>], builder: BuilderChoice, p: &Params) -> CliResult<()> {
    // Build everything before writing anything.
    let mut outputs: Vec<(String, Forest)> = Vec::new();
    if matches!(builder, BuilderChoice::Federated | BuilderChoice::Both) {
        let specs: Vec<ClientSpec> = data
            .iter()
            .zip(1u32..)
            .map(|(d, id)| ClientSpec { data: d.clone(), seed: client_seed(p.seed, id) })
            .collect();
        let cfg = FederatedConfig { num_trees: p.trees, max_depth: p.depth, timeout: p.timeout };
        let start = Instant::now();
        let out = run_loopback(&specs, &cfg).context("federated build failed")?;
        let peak = out.peak_memory.iter().copied().max().unwrap_or(0);
        report_cost("federated", peak, start.elapsed(), out.rounds_per_tree.iter().copied().max());
        outputs.extend(out.forests.into_iter().zip(1u32..).map(|(f, id)| (format!("client-{id}.json"), f)));
    }
    if matches!(builder, BuilderChoice::Baseline | BuilderChoice::Both) {
        let pooled = data.concat();
        let meter = MemoryMeter::new();
        let start = Instant::now();
        let forest =
            build_iforest_baseline_metered(&pooled, p.trees, p.depth, derive_seed(p.seed, &[TAG_BASELINE]), &meter)
                .context("baseline build failed")?;
        report_cost("baseline", meter.peak(), start.elapsed(), None);
        outputs.push(("baseline.json".into(), forest));
    }
    for (name, forest) in &outputs {
        let path = write_model(&p.out_dir, name, forest)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn server(listen: &str, nodes: &[u32], p: &Params) -> CliResult<()> {
    let listener = TcpListener::bind(listen).with_context(|| format!("cannot listen on {listen}"))?;
    log::info!("listening on {}, waiting for clients {nodes:?}", listener.local_addr().map_err(anyhow::Error::from)?);
    let transport = TcpServer::accept_clients(&listener, nodes, p.timeout).context("client registration failed")?;
    let mut ctx = NodeCtx::server(Box::new(transport));
    let start = Instant::now();
    let build = build_iforest_federated(&mut ctx, &[], p.trees, p.depth, 0, &MemoryMeter::new())
        .context("federated build failed")?;
    println!(
        "server: trees={} total_rounds={} max_rounds_per_tree={} build_time_seconds={:.6}",
        build.rounds_per_tree.len(),
        build.rounds_per_tree.iter().sum::<usize>(),
        build.rounds_per_tree.iter().copied().max().unwrap_or(0),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn client(connect: &str, id: u32, data: Vec<f64>, p: &Params) -> CliResult<()> {
    let transport = TcpClient::connect(connect, id, p.timeout).with_context(|| format!("cannot join {connect}"))?;
    let mut ctx = NodeCtx::client(Box::new(transport));
    let meter = MemoryMeter::new();
    let start = Instant::now();
    let build = build_iforest_federated(&mut ctx, &data, p.trees, p.depth, client_seed(p.seed, id), &meter)
        .context("federated build failed")?;
    report_cost(&format!("client {id}"), meter.peak(), start.elapsed(), build.rounds_per_tree.iter().copied().max());
    let forest = build.forest.expect("clients return a forest");
    let path = write_model(&p.out_dir, &format!("client-{id}.json"), &forest)?;
    println!("wrote {}", path.display());
    Ok(())
}
