//! End-to-end analyses: nested-model ladders with FDR-corrected LRTs,
//! held-out condition contrasts, predictor correlations and the report
//! bundle that records them.

mod corr;
mod holdout;
mod ladder;
pub mod report;

use thiserror::Error;

use crate::ingest::{Condition, IngestError};
use crate::lmm::LmmError;
use crate::metrics::MetricsError;
use crate::stats::StatsError;

pub use corr::{corr_analysis, stronger_correlation, ConditionCorrelation, CorrelationReport, ScatterPoint};
pub use holdout::{
    holdout_eval, split_rows, ConditionSummary, ContrastPlan, HoldoutReport, HoldoutSpec, MeanSe, ModelHoldout, Split,
};
pub use ladder::{
    run_ladder, run_ladders, variance_partition, variance_partition_spec, Comparison, LadderReport, LadderSpec,
    RungResult,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("fitting {model}: {source}")]
    Fit {
        model: String,
        #[source]
        source: LmmError,
    },
    #[error("ladder {ladder}: {full} does not nest {reduced}: {reason}")]
    NotNested {
        ladder: String,
        reduced: String,
        full: String,
        reason: String,
    },
    #[error("held-out condition {condition} has {rows} row(s) in the contrast ROIs; at least 2 are needed")]
    EmptyCell { condition: Condition, rows: usize },
    #[error("stimulus {frame_id}/{condition} carries more than one value of a predictor")]
    InconsistentStimulus { frame_id: String, condition: Condition },
    #[error("correlation needs at least 3 unique stimuli, got {0}")]
    TooFewStimuli(usize),
    #[error("column `{0}` not found in the analysis table")]
    UnknownColumn(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
