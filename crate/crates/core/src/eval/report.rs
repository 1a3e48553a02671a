use serde::Serialize;

use super::experiment::ExperimentRecord;
use super::metrics::ConfusionMatrix;
use crate::iforest::Builder;

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<ExperimentRecord>,
    /// Non-blank lines that did not parse as a record.
    pub corrupt: usize,
}

/// Parses a JSONL results file, counting rather than failing on bad lines.
pub fn parse_records(text: &str) -> ParsedRecords {
    let mut out = ParsedRecords::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<ExperimentRecord>(line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.corrupt += 1,
        }
    }
    out
}

/// Means over the successful repetitions of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub label: String,
    pub builder: Builder,
    pub max_depth: usize,
    pub num_trees: usize,
    pub train_size: usize,
    pub n_clients: usize,
    pub reps: usize,
    pub errors: usize,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub confusion: ConfusionMatrix,
    pub peak_memory_bytes: f64,
    /// `None` when no repetition recorded a time.
    pub build_time_seconds: Option<f64>,
    pub model_nodes: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// One row per `(builder, label, parameters)`, in order of first appearance.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut groups: Vec<(&ExperimentRecord, Vec<&ExperimentRecord>)> = Vec::new();
    for r in records {
        let same = |g: &ExperimentRecord| {
            let (a, b) = (&g.params, &r.params);
            (a.builder, &a.label, a.max_depth, a.num_trees, a.train_size, a.n_clients)
                == (b.builder, &b.label, b.max_depth, b.num_trees, b.train_size, b.n_clients)
        };
        match groups.iter_mut().find(|(head, _)| same(head)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }

    groups
        .into_iter()
        .map(|(head, members)| {
            let ok: Vec<_> = members
                .iter()
                .filter_map(|r| Some((r.metrics.as_ref()?, r.cost.as_ref()?)))
                .collect();
            let times: Vec<f64> = ok.iter().filter_map(|(_, c)| c.build_time_seconds).collect();
            let p = &head.params;
            AggregateRow {
                label: p.label.clone(),
                builder: p.builder,
                max_depth: p.max_depth,
                num_trees: p.num_trees,
                train_size: p.train_size,
                n_clients: p.n_clients,
                reps: ok.len(),
                errors: members.len() - ok.len(),
                auc_roc: mean(ok.iter().map(|(m, _)| m.auc_roc)),
                auc_pr: mean(ok.iter().map(|(m, _)| m.auc_pr)),
                best_f1: mean(ok.iter().map(|(m, _)| m.best_f1)),
                best_threshold: mean(ok.iter().map(|(m, _)| m.best_threshold)),
                tpr: mean(ok.iter().map(|(m, _)| m.tpr)),
                fpr: mean(ok.iter().map(|(m, _)| m.fpr)),
                ppv: mean(ok.iter().map(|(m, _)| m.ppv)),
                confusion: ConfusionMatrix::mean(&ok.iter().map(|(m, _)| m.confusion).collect::<Vec<_>>()),
                peak_memory_bytes: mean(ok.iter().map(|(_, c)| c.peak_memory_bytes as f64)),
                build_time_seconds: (!times.is_empty()).then(|| mean(times.iter().copied())),
                model_nodes: mean(ok.iter().map(|(_, c)| c.model_nodes as f64)),
            }
        })
        .collect()
}
