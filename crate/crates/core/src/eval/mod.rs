//! Synthetic telemetry, detection metrics and the experiment harness.

mod cost;
mod data;
mod experiment;
mod metrics;
mod report;

use thiserror::Error;

pub use cost::{measure_cost, Cost, CostProbe};
pub use data::{gen_test_set, gen_training_set, DataConfig, LabeledSample};
pub use experiment::{
    baseline_point, named_point, run_experiment, ClientMetrics, ExperimentConfig, ExperimentRecord,
    GridPoint, JsonlSink, RecordSink, RunCost, RunMetrics, RunParams, NAMED_POINTS, RECORD_VERSION,
};
pub use metrics::{
    best_threshold_by_f1, confusion, evaluate, f1, fpr, ppv, pr_auc, pr_curve, roc_auc, roc_curve,
    spearman, tpr, ConfusionMatrix, CurvePoint, Evaluation,
};
pub use report::{aggregate, parse_records, AggregateRow, ParsedRecords};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("undefined curve")]
    UndefinedCurve,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("result sink: {0}")]
    Sink(#[from] std::io::Error),
}
