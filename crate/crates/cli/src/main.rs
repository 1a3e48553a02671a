//! `pfliforest`: train, score and evaluate federated isolation forests.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for usage or
//! configuration mistakes (bad flags, missing input files, invalid grid).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod experiment;
mod report;
mod score;
mod train;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "pfliforest", version, about = "Federated isolation forest for univariate telemetry")]
struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, env = "FEDFOREST_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a forest, either all in one process or as a TCP server/client.
    Train(train::TrainArgs),
    /// Score readings against a saved model.
    Score(score::ScoreArgs),
    /// Run the evaluation grid and append JSONL records.
    Experiment(experiment::ExperimentArgs),
    /// Aggregate a results file into CSV tables.
    Report(report::ReportArgs),
}

/// Command line wins, then the config file, then the built-in default.
/// Environment overrides are resolved by clap into the command-line value.
pub(crate) fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = RunConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Train(a) => train::run(a, &file),
        Command::Score(a) => score::run(a),
        Command::Experiment(a) => experiment::run(a, &file),
        Command::Report(a) => report::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
