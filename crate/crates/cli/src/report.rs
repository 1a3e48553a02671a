use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use pfliforest::eval::{aggregate, parse_records, AggregateRow};
use pfliforest::Builder;
use serde::Serialize;

use crate::error::{CliError, CliResult, UsageContext};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSONL file written by `experiment`.
    pub results: PathBuf,
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    builder: Builder,
    max_depth: usize,
    num_trees: usize,
    train_size: usize,
    n_clients: usize,
    reps: usize,
    errors: usize,
    auc_roc: f64,
    auc_pr: f64,
    best_f1: f64,
    best_threshold: f64,
    tpr: f64,
    fpr: f64,
    ppv: f64,
    peak_memory_bytes: f64,
    build_time_seconds: Option<f64>,
    model_nodes: f64,
}

#[derive(Serialize)]
struct MemoryAucRow<'a> {
    label: &'a str,
    builder: Builder,
    peak_memory_bytes: f64,
    auc_roc: f64,
    auc_pr: f64,
}

#[derive(Serialize)]
struct TimeMemoryRow<'a> {
    label: &'a str,
    builder: Builder,
    build_time_seconds: Option<f64>,
    peak_memory_bytes: f64,
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    label: &'a str,
    baseline_label: &'a str,
    federated_auc_roc: f64,
    baseline_auc_roc: f64,
    federated_auc_pr: f64,
    baseline_auc_pr: f64,
    federated_best_f1: f64,
    baseline_best_f1: f64,
}

#[derive(Serialize)]
struct ConfusionRow<'a> {
    label: &'a str,
    builder: Builder,
    tp: f64,
    fp: f64,
    #[serde(rename = "fn")]
    fn_: f64,
    tn: f64,
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Pairs each federated row with the baseline row labelled `<label>'`.
fn matched(rows: &[AggregateRow]) -> Vec<ComparisonRow<'_>> {
    rows.iter()
        .filter(|r| r.builder == Builder::Federated)
        .filter_map(|f| {
            let want = format!("{}'", f.label);
            let b = rows.iter().find(|b| {
                b.builder == Builder::Baseline && b.label == want && b.max_depth == f.max_depth && b.num_trees == f.num_trees
            })?;
            Some(ComparisonRow {
                label: &f.label,
                baseline_label: &b.label,
                federated_auc_roc: f.auc_roc,
                baseline_auc_roc: b.auc_roc,
                federated_auc_pr: f.auc_pr,
                baseline_auc_pr: b.auc_pr,
                federated_best_f1: f.best_f1,
                baseline_best_f1: b.best_f1,
            })
        })
        .collect()
}

pub fn run(args: ReportArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.results)
        .with_context(|| format!("cannot read {}", args.results.display()))
        .or_usage()?;
    let parsed = parse_records(&text);
    if parsed.corrupt > 0 {
        eprintln!("warning: skipped {} corrupt lines in {}", parsed.corrupt, args.results.display());
    }
    let rows: Vec<AggregateRow> = aggregate(&parsed.records).into_iter().filter(|r| r.reps > 0).collect();
    if rows.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("no successful records in {}", args.results.display())));
    }

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_csv(
        dir,
        "summary.csv",
        rows.iter().map(|r| SummaryRow {
            label: &r.label,
            builder: r.builder,
            max_depth: r.max_depth,
            num_trees: r.num_trees,
            train_size: r.train_size,
            n_clients: r.n_clients,
            reps: r.reps,
            errors: r.errors,
            auc_roc: r.auc_roc,
            auc_pr: r.auc_pr,
            best_f1: r.best_f1,
            best_threshold: r.best_threshold,
            tpr: r.tpr,
            fpr: r.fpr,
            ppv: r.ppv,
            peak_memory_bytes: r.peak_memory_bytes,
            build_time_seconds: r.build_time_seconds,
            model_nodes: r.model_nodes,
        }),
    )?;
    write_csv(
        dir,
        "fig3_memory_vs_auc.csv",
        rows.iter().map(|r| MemoryAucRow {
            label: &r.label,
            builder: r.builder,
            peak_memory_bytes: r.peak_memory_bytes,
            auc_roc: r.auc_roc,
            auc_pr: r.auc_pr,
        }),
    )?;
    write_csv(
        dir,
        "fig4_time_vs_memory.csv",
        rows.iter().map(|r| TimeMemoryRow {
            label: &r.label,
            builder: r.builder,
            build_time_seconds: r.build_time_seconds,
            peak_memory_bytes: r.peak_memory_bytes,
        }),
    )?;
    write_csv(dir, "fig5_baseline_comparison.csv", matched(&rows))?;
    write_csv(
        dir,
        "confusion.csv",
        rows.iter().map(|r| ConfusionRow {
            label: &r.label,
            builder: r.builder,
            tp: r.confusion.tp,
            fp: r.confusion.fp,
            fn_: r.confusion.fn_,
            tn: r.confusion.tn,
        }),
    )?;

    println!("{:<10} {:<9} {:>5} {:>8} {:>8} {:>8} {:>8} {:>12}", "label", "builder", "reps", "auc_roc", "auc_pr", "tpr", "fpr", "peak_bytes");
    for r in &rows {
        println!(
            "{:<10} {:<9} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>12.0}",
            r.label, r.builder.to_string(), r.reps, r.auc_roc, r.auc_pr, r.tpr, r.fpr, r.peak_memory_bytes
        );
    }
    println!("wrote tables to {}", dir.display());
    Ok(())
}
