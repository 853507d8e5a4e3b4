//! Input parsing and the joined long-format analysis table.
//!
//! Three file kinds come in: sentence stimuli (TSV), per-model language
//! model output (JSON lines) and EEG measurements (CSV, either window means
//! or per-sample epochs). [`build_analysis_table`] joins them on
//! `(frame_id, condition)` and derives predictor columns.

mod eeg;
mod lm_output;
mod stimuli;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;

pub use eeg::{
    parse_epochs, parse_trials, reduce_epochs, window_mean, write_trials, EpochSample, TrialMeasurement, Window,
};
pub use lm_output::{parse_lm_output, write_lm_output, LmSentenceRecord};
pub use stimuli::{parse_stimuli, write_stimuli, Stimulus, StimulusFormat};
pub use table::{build_analysis_table, AnalysisTable, ColumnRef, PredictorRecipe, RowKey};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unknown condition `{label}` (valid labels: best, related, unrelated, implausible)")]
    UnknownCondition { line: u64, label: String },
    #[error(
        "line {line}: unknown ROI `{label}` (valid labels: prefrontal, frontocentral, central, posterior, left_temporal, right_temporal)"
    )]
    UnknownRoi { line: u64, label: String },
    #[error("line {line}: target_index {target_index} out of range for a {words}-word sentence")]
    TargetOutOfRange {
        line: u64,
        target_index: usize,
        words: usize,
    },
    #[error("line {line}: embedding dimension {found} differs from {expected}")]
    DimensionMismatch { line: u64, expected: usize, found: usize },
    #[error("line {line}: token {token} has positive log-probability {value}")]
    PositiveLogprob { line: u64, token: usize, value: f64 },
    #[error("line {line}: word alignment {message}")]
    Alignment { line: u64, message: String },
    #[error("empty window [{start}, {end}] ms: no samples fall inside")]
    EmptyWindow { start: f64, end: f64 },
    #[error("unmatched keys: {}", keys.join(", "))]
    Unmatched { keys: Vec<String> },
    #[error("duplicate language-model record for model {model_id}, frame {frame_id}, condition {condition}")]
    DuplicateLmRecord {
        model_id: String,
        frame_id: String,
        condition: Condition,
    },
    #[error("{key}: {source}")]
    Metric {
        key: String,
        #[source]
        source: MetricsError,
    },
    #[error("analysis table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Experimental condition of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    #[serde(alias = "best_completion")]
    Best,
    Related,
    Unrelated,
    Implausible,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Best,
        Condition::Related,
        Condition::Unrelated,
        Condition::Implausible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Best => "best",
            Condition::Related => "related",
            Condition::Unrelated => "unrelated",
            Condition::Implausible => "implausible",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Condition {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "best" | "bestcompletion" => Ok(Condition::Best),
            "related" => Ok(Condition::Related),
            "unrelated" => Ok(Condition::Unrelated),
            "implausible" => Ok(Condition::Implausible),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// Scalp region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Roi {
    Prefrontal,
    FrontoCentral,
    Central,
    Posterior,
    LeftTemporal,
    RightTemporal,
}

impl Roi {
    pub const ALL: [Roi; 6] = [
        Roi::Prefrontal,
        Roi::FrontoCentral,
        Roi::Central,
        Roi::Posterior,
        Roi::LeftTemporal,
        Roi::RightTemporal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Roi::Prefrontal => "prefrontal",
            Roi::FrontoCentral => "frontocentral",
            Roi::Central => "central",
            Roi::Posterior => "posterior",
            Roi::LeftTemporal => "left_temporal",
            Roi::RightTemporal => "right_temporal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Roi {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "prefrontal" => Ok(Roi::Prefrontal),
            "frontocentral" => Ok(Roi::FrontoCentral),
            "central" => Ok(Roi::Central),
            "posterior" => Ok(Roi::Posterior),
            "lefttemporal" => Ok(Roi::LeftTemporal),
            "righttemporal" => Ok(Roi::RightTemporal),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// Lowercase and strip separators so `Fronto-central` and `fronto_central` agree.
fn normalize_label(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}
