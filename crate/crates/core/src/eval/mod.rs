//! Metric computation, normalized scores, pooled ranking and dataset splits.

mod metrics;
mod ranks;
mod score;
mod split;

use thiserror::Error;

pub use metrics::{f1_binary, f1_weighted, metric_score, rmse, MetricKind};
pub use ranks::{
    compute_ranks, rescaled_table, MethodSummary, RankReport, RankedRun, RescaledRow, ScoreEntry,
    ScoreTable, POOLING_NOTE,
};
pub use score::{normalized_score, rescaled_ns};
pub use split::{split_dataset, DatasetSplit};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid score {value} for metric {metric}")]
    InvalidScore { value: f64, metric: MetricKind },
    #[error("reference normalized score is zero")]
    DivisionByZero,
    #[error("score table is empty")]
    EmptyTable,
    #[error("duplicate entry for method `{method}`, dataset `{dataset}`, run {run}")]
    DuplicateEntry { method: String, dataset: String, run: u32 },
    #[error("method `{method}` has no runs on dataset `{dataset}`")]
    MissingRuns { method: String, dataset: String },
    #[error("dataset `{dataset}` mixes metrics {first} and {second}")]
    MixedMetrics { dataset: String, first: MetricKind, second: MetricKind },
    #[error("unknown reference method `{0}`")]
    UnknownReference(String),
    #[error("prediction and truth lengths differ ({predictions} vs {truth})")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("prediction label `{0}` does not occur in the truth labels")]
    UnknownLabel(String),
    #[error("non-numeric value `{0}` in a regression column")]
    NotNumeric(String),
    #[error("need at least 5 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("csv: {0}")]
    Csv(String),
}
