use std::io::{BufWriter, Read, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use pfliforest::iforest::{deserialize_model, ScoreOptions};
use pfliforest::{classify, Forest};

use crate::error::{usage, CliResult, UsageContext};
use crate::train::read_readings;

pub const DEFAULT_THRESHOLD: f64 = 0.8265;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Scores at or above this are anomalies.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Add the expected remaining depth at leaves that held several readings.
    #[arg(long)]
    pub leaf_adjustment: bool,
    /// File with one reading per line; stdin when neither this nor values are given.
    #[arg(long, conflicts_with = "values")]
    pub input: Option<PathBuf>,
    #[arg(allow_negative_numbers = true)]
    pub values: Vec<f64>,
}

fn load_model(path: &std::path::Path) -> CliResult<Forest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))
        .or_usage()?;
    Ok(deserialize_model(&text).with_context(|| format!("invalid model {}", path.display()))?)
}

pub fn run(args: ScoreArgs) -> CliResult<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return usage(format!("--threshold must lie in (0, 1), got {}", args.threshold));
    }
    if let Some(v) = args.values.iter().find(|v| !v.is_finite()) {
        return usage(format!("reading {v} is not finite"));
    }
    let forest = load_model(&args.model)?;
    let values = match (&args.input, args.values.is_empty()) {
        (Some(path), _) => read_readings(path)?,
        (None, false) => args.values,
        (None, true) => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("cannot read stdin")?;
            parse_lines(&text)?
        }
    };
    let opts = ScoreOptions { leaf_adjustment: args.leaf_adjustment };
    let mut out = BufWriter::new(std::io::stdout().lock());
    for x in values {
        let s = forest.score_with(x, opts);
        writeln!(out, "{x}\t{:.6}\t{}", s.value(), classify(s, args.threshold)).context("cannot write output")?;
    }
    out.flush().context("cannot write output")?;
    Ok(())
}

fn parse_lines(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return usage(format!("stdin:{}: `{line}` is not a finite number", i + 1)),
        }
    }
    Ok(out)
}
