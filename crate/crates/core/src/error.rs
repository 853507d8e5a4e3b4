use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::IngestError;
use crate::lmm::LmmError;
use crate::metrics::MetricsError;
use crate::pipeline::PipelineError;
use crate::stats::StatsError;
use crate::synth::SynthError;

/// Any failure surfaced by the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", .path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Lmm(#[from] LmmError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn lmm_code(e: &LmmError) -> i32 {
    match e {
        LmmError::UnknownColumn(_)
        | LmmError::NotNumeric(_)
        | LmmError::NotFactor(_)
        | LmmError::InvalidTerm(_)
        | LmmError::DuplicateTerm(_) => 4,
        LmmError::Summary(_) => 2,
        _ => 3,
    }
}

impl Error {
    /// 2 for bad input data, 3 for numerical failures, 4 for bad configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input { .. } | Error::Io { .. } | Error::Ingest(_) => 2,
            Error::Metrics(_) | Error::Stats(_) => 3,
            Error::Lmm(e) => lmm_code(e),
            Error::Pipeline(e) => match e {
                PipelineError::Fit { source, .. } => lmm_code(source),
                PipelineError::NotNested { .. } | PipelineError::Stats(_) | PipelineError::Metrics(_) => 3,
                PipelineError::Config(_) | PipelineError::UnknownColumn(_) => 4,
                _ => 2,
            },
            Error::Synth(SynthError::Ingest(_)) => 2,
            Error::Synth(_) | Error::Config(_) => 4,
        }
    }
}
