use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cost::{measure_cost, Cost};
use super::data::{gen_test_set, gen_training_set, DataConfig, LabeledSample};
use super::metrics::{evaluate, roc_auc, pr_auc, ConfusionMatrix};
use super::EvalError;
use crate::iforest::{build_iforest_baseline_metered, Builder, Forest, Label, ScoreOptions};
use crate::protocol::{run_loopback, ClientSpec, FederatedConfig};
use crate::seed::{derive_seed, rng_from_seed};

pub const RECORD_VERSION: &str = "pfliforest-exp/1";

const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_FEDERATED: u64 = 3;
const TAG_BASELINE: u64 = 4;

/// One `(max_depth, num_trees, train_size)` configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub max_depth: usize,
    pub num_trees: usize,
    /// Readings per client.
    pub train_size: usize,
}

/// The reference grid: `(label, depth, trees, readings per client)`.
pub const NAMED_POINTS: [(&str, usize, usize, usize); 5] = [
    ("A", 4, 10, 50),
    ("B", 6, 25, 100),
    ("C", 8, 50, 150),
    ("D", 10, 75, 200),
    ("E", 6, 25, 200),
];

impl GridPoint {
    /// Labelled with the reference letter when the parameters match one.
    pub fn new(max_depth: usize, num_trees: usize, train_size: usize) -> Self {
        let label = NAMED_POINTS
            .iter()
            .find(|&&(_, d, t, n)| (d, t, n) == (max_depth, num_trees, train_size))
            .map(|(l, ..)| l.to_string())
            .unwrap_or_else(|| format!("d{max_depth}-t{num_trees}-n{train_size}"));
        Self { label, max_depth, num_trees, train_size }
    }
}

/// Looks up `A` … `E` (case-insensitive).
pub fn named_point(name: &str) -> Option<GridPoint> {
    NAMED_POINTS
        .iter()
        .find(|(l, ..)| l.eq_ignore_ascii_case(name.trim()))
        .map(|&(l, d, t, n)| GridPoint { label: l.to_string(), max_depth: d, num_trees: t, train_size: n })
}

/// The matching baseline point: same depth and trees, all clients' readings pooled.
pub fn baseline_point(p: &GridPoint, n_clients: usize) -> GridPoint {
    GridPoint {
        label: format!("{}'", p.label),
        max_depth: p.max_depth,
        num_trees: p.num_trees,
        train_size: p.train_size * n_clients,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub points: Vec<GridPoint>,
    pub builders: Vec<Builder>,
    pub reps: usize,
    pub seed: u64,
    pub n_clients: usize,
    pub n_test: usize,
    pub anomaly_frac: f64,
    pub data: DataConfig,
    pub score: ScoreOptions,
    /// Off makes records byte-identical across runs.
    pub record_timing: bool,
    pub timeout: Option<Duration>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            points: NAMED_POINTS.iter().filter_map(|(l, ..)| named_point(l)).collect(),
            builders: vec![Builder::Federated],
            reps: 40,
            seed: 0,
            n_clients: 2,
            n_test: 10_000,
            anomaly_frac: 0.1,
            data: DataConfig::default(),
            score: ScoreOptions::default(),
            record_timing: true,
            timeout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub label: String,
    pub builder: Builder,
    pub max_depth: usize,
    pub num_trees: usize,
    /// Per client for federated runs, pooled for baseline runs.
    pub train_size: usize,
    pub n_clients: usize,
    pub seed: u64,
    pub rep_idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client: usize,
    pub auc_roc: f64,
    pub auc_pr: f64,
}

/// Metrics of the global model (lowest client id for federated runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub confusion: ConfusionMatrix,
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub mean_score_anomaly: f64,
    pub mean_score_normal: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_client: Vec<ClientMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCost {
    pub peak_memory_bytes: usize,
    /// `null` when timing is disabled.
    pub build_time_seconds: Option<f64>,
    pub model_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds_per_tree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub params: RunParams,
    #[serde(default)]
    pub metrics: Option<RunMetrics>,
    #[serde(default)]
    pub cost: Option<RunCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub version: String,
}

/// Append-only destination for records.
pub trait RecordSink {
    fn append(&mut self, record: &ExperimentRecord) -> std::io::Result<()>;
}

/// One JSON object per line, flushed after each record.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> RecordSink for JsonlSink<W> {
    fn append(&mut self, record: &ExperimentRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

struct BuiltModel {
    forests: Vec<Forest>,
    max_rounds: Option<usize>,
}

/// Runs every point, builder and repetition in order, appending each record
/// to `sink` as soon as it is complete.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    sink: &mut dyn RecordSink,
) -> Result<Vec<ExperimentRecord>, EvalError> {
    if cfg.points.is_empty() || cfg.builders.is_empty() {
        return Err(EvalError::Config("experiment grid is empty".into()));
    }
    if cfg.n_clients == 0 {
        return Err(EvalError::Config("at least one client is required".into()));
    }
    if cfg.n_test == 0 {
        return Err(EvalError::Config("test set size must be at least 1".into()));
    }
    cfg.data.validate()?;

    let mut records = Vec::new();
    for point in &cfg.points {
        let client_data = (0..cfg.n_clients)
            .map(|c| {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, &[TAG_TRAIN, point.train_size as u64, c as u64]));
                gen_training_set(point.train_size, &cfg.data, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pooled: Vec<f64> = client_data.concat();

        for &builder in &cfg.builders {
            let shown = match builder {
                Builder::Federated => point.clone(),
                Builder::Baseline => baseline_point(point, cfg.n_clients),
            };
            for rep in 0..cfg.reps {
                let params = RunParams {
                    label: shown.label.clone(),
                    builder,
                    max_depth: shown.max_depth,
                    num_trees: shown.num_trees,
                    train_size: shown.train_size,
                    n_clients: cfg.n_clients,
                    seed: cfg.seed,
                    rep_idx: rep,
                };
                let key = [point.max_depth as u64, point.num_trees as u64, point.train_size as u64, rep as u64];
                let (built, cost) = measure_cost(|probe| match builder {
                    Builder::Federated => {
                        let specs: Vec<ClientSpec> = client_data
                            .iter()
                            .enumerate()
                            .map(|(c, data)| ClientSpec {
                                data: data.clone(),
                                seed: derive_seed(cfg.seed, &[&[TAG_FEDERATED, c as u64][..], &key].concat()),
                            })
                            .collect();
                        let fed = FederatedConfig {
                            num_trees: point.num_trees,
                            max_depth: point.max_depth,
                            timeout: cfg.timeout,
                        };
                        run_loopback(&specs, &fed).map_err(|e| e.to_string()).map(|out| {
                            probe.report_peak(out.peak_memory.iter().copied().max().unwrap_or(0));
                            BuiltModel {
                                forests: out.forests,
                                max_rounds: out.rounds_per_tree.iter().copied().max(),
                            }
                        })
                    }
                    Builder::Baseline => {
                        let seed = derive_seed(cfg.seed, &[&[TAG_BASELINE][..], &key].concat());
                        build_iforest_baseline_metered(&pooled, point.num_trees, point.max_depth, seed, &probe.meter())
                            .map(|f| BuiltModel { forests: vec![f], max_rounds: None })
                            .map_err(|e| e.to_string())
                    }
                });

                let record = match built {
                    Ok(model) => {
                        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[&[TAG_TEST][..], &key].concat()));
                        let test = gen_test_set(&pooled, cfg.n_test, cfg.anomaly_frac, &cfg.data, &mut rng)?;
                        match score_run(&model, &test, builder, cfg.score) {
                            Ok(metrics) => ExperimentRecord {
                                params,
                                metrics: Some(metrics),
                                cost: Some(run_cost(&model, cost, cfg.record_timing)),
                                error: None,
                                version: RECORD_VERSION.into(),
                            },
                            Err(e) => error_record(params, e.to_string()),
                        }
                    }
                    Err(e) => error_record(params, e),
                };
                let failed = record.error.is_some();
                sink.append(&record)?;
                records.push(record);
                if failed {
                    log::warn!("config {} ({builder}) aborted at rep {rep}", shown.label);
                    break;
                }
            }
        }
    }
    Ok(records)
}

fn error_record(params: RunParams, error: String) -> ExperimentRecord {
    ExperimentRecord { params, metrics: None, cost: None, error: Some(error), version: RECORD_VERSION.into() }
}

fn run_cost(model: &BuiltModel, cost: Cost, record_timing: bool) -> RunCost {
    RunCost {
        peak_memory_bytes: cost.peak_memory_bytes,
        build_time_seconds: record_timing.then_some(cost.build_time_seconds),
        model_nodes: model.forests[0].node_count(),
        max_rounds_per_tree: model.max_rounds,
    }
}

fn scored_by(forest: &Forest, test: &[LabeledSample], opts: ScoreOptions) -> Vec<(f64, Label)> {
    test.iter().map(|s| (forest.score_with(s.value, opts).value(), s.label)).collect()
}

fn score_run(
    model: &BuiltModel,
    test: &[LabeledSample],
    builder: Builder,
    opts: ScoreOptions,
) -> Result<RunMetrics, EvalError> {
    let scored = scored_by(&model.forests[0], test, opts);
    let ev = evaluate(&scored)?;
    let mean_of = |want: Label| {
        let v: Vec<f64> = scored.iter().filter(|(_, l)| *l == want).map(|(s, _)| *s).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let per_client = match builder {
        Builder::Baseline => Vec::new(),
        Builder::Federated => model
            .forests
            .iter()
            .enumerate()
            .map(|(client, f)| {
                let s = scored_by(f, test, opts);
                Ok(ClientMetrics { client, auc_roc: roc_auc(&s)?, auc_pr: pr_auc(&s)? })
            })
            .collect::<Result<_, EvalError>>()?,
    };
    Ok(RunMetrics {
        auc_roc: ev.auc_roc,
        auc_pr: ev.auc_pr,
        best_f1: ev.best_f1,
        best_threshold: ev.best_threshold,
        confusion: ev.confusion,
        tpr: ev.confusion.tpr(),
        fpr: ev.confusion.fpr(),
        ppv: ev.confusion.ppv(),
        mean_score_anomaly: mean_of(Label::Anomaly),
        mean_score_normal: mean_of(Label::Normal),
        per_client,
    })
}
