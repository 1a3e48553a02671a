use std::fs::OpenOptions;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Args;
use pfliforest::eval::{named_point, run_experiment, EvalError, ExperimentConfig, GridPoint, JsonlSink, NAMED_POINTS};
use pfliforest::iforest::ScoreOptions;
use pfliforest::Builder;

use crate::config::{BuilderChoice, RunConfig, TransportKind};
use crate::error::{usage, CliError, CliResult};
use crate::pick;

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Named grid points (A to E). Defaults to A, B, C and D.
    #[arg(long, alias = "point", value_delimiter = ',', conflicts_with_all = ["depths", "trees", "train_sizes"])]
    pub points: Option<Vec<String>>,
    /// With --trees and --train-sizes, runs the full product of the three lists.
    #[arg(long, value_delimiter = ',', requires_all = ["trees", "train_sizes"])]
    pub depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires_all = ["depths", "train_sizes"])]
    pub trees: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires_all = ["depths", "trees"])]
    pub train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub builder: Option<BuilderChoice>,
    #[arg(long, value_enum, env = "FEDFOREST_TRANSPORT")]
    pub transport: Option<TransportKind>,
    /// Records are appended to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `null` build times so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long, default_value_t = 10_000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0.1)]
    pub anomaly_frac: f64,
    #[arg(long)]
    pub leaf_adjustment: bool,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

fn grid(args: &ExperimentArgs) -> CliResult<Vec<GridPoint>> {
    if let (Some(ds), Some(ts), Some(ns)) = (&args.depths, &args.trees, &args.train_sizes) {
        let mut out = Vec::new();
        for &d in ds {
            for &t in ts {
                for &n in ns {
                    if d == 0 || t == 0 || n == 0 {
                        return usage("grid depths, tree counts and train sizes must be at least 1");
                    }
                    out.push(GridPoint::new(d, t, n));
                }
            }
        }
        return Ok(out);
    }
    let names: Vec<String> = match &args.points {
        Some(p) => p.clone(),
        None => NAMED_POINTS[..4].iter().map(|(l, ..)| l.to_string()).collect(),
    };
    names
        .iter()
        .map(|n| match named_point(n.trim()) {
            Some(p) => Ok(p),
            None => usage(format!("unknown grid point `{n}` (expected one of A, B, C, D, E)")),
        })
        .collect()
}

pub fn run(args: ExperimentArgs, file: &RunConfig) -> CliResult<()> {
    if pick(args.transport, file.transport, TransportKind::Loopback) != TransportKind::Loopback {
        return usage("experiments run over the loopback transport");
    }
    let builders = match pick(args.builder, file.builder, BuilderChoice::Federated) {
        BuilderChoice::Federated => vec![Builder::Federated],
        BuilderChoice::Baseline => vec![Builder::Baseline],
        BuilderChoice::Both => vec![Builder::Federated, Builder::Baseline],
    };
    if args.reps == 0 {
        return usage("--reps must be at least 1");
    }
    if !(args.anomaly_frac > 0.0 && args.anomaly_frac < 1.0) {
        return usage("--anomaly-frac must lie in (0, 1)");
    }
    let cfg = ExperimentConfig {
        points: grid(&args)?,
        builders,
        reps: args.reps,
        seed: pick(args.seed, file.seed, 0),
        n_clients: pick(args.clients, file.clients, 2),
        n_test: args.n_test,
        anomaly_frac: args.anomaly_frac,
        score: ScoreOptions { leaf_adjustment: args.leaf_adjustment },
        record_timing: !args.no_timing,
        timeout: args.timeout_secs.or(file.timeout_secs).map(Duration::from_secs),
        ..ExperimentConfig::default()
    };
    let out = pick(args.out, file.out.clone(), PathBuf::from("results.jsonl"));
    let handle = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&out)
        .with_context(|| format!("cannot open {}", out.display()))?;
    let mut sink = JsonlSink::new(BufWriter::new(handle));
    let records = run_experiment(&cfg, &mut sink).map_err(|e| match e {
        EvalError::Config(_) | EvalError::EmptyInput => CliError::Usage(e.into()),
        other => CliError::Runtime(anyhow::Error::from(other).context(format!("writing {}", out.display()))),
    })?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("wrote {} records to {} ({failed} failed)", records.len(), out.display());
    if failed > 0 {
        return Err(CliError::Runtime(anyhow::anyhow!("{failed} runs failed; see the error field in {}", out.display())));
    }
    Ok(())
}
