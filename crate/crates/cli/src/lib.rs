//! Pipeline behind the `presence` binary: synthetic capture, feature images,
//! three-stage training, evaluation and rendering.

pub mod config;
pub mod experiment;
pub mod pipeline;

pub use config::{DataConfig, DbSpace, EvalConfig, RunConfig};
pub use experiment::{run_trial, run_trials, Aggregate, MeanStd, TrialReport, TrialsReport};
pub use pipeline::{evaluate, featurize, generate, render, train, Layout, Manifest, StageSelection};

use presence_csi::{CsiError, DumpError};
use presence_feig::FeigError;
use presence_metrics::MetricsError;
use presence_nn::NnError;
use presence_train::TrainError;
use thiserror::Error;

/// Failure classes; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("I/O: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() { CliError::Io(e.to_string()) } else { CliError::Validation(e.to_string()) }
    }
}

impl From<CsiError> for CliError {
    fn from(e: CsiError) -> Self {
        match e {
            CsiError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DumpError> for CliError {
    fn from(e: DumpError) -> Self {
        match e {
            DumpError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FeigError> for CliError {
    fn from(e: FeigError) -> Self {
        match e {
            FeigError::Io(_) | FeigError::Image(_) => CliError::Io(e.to_string()),
            FeigError::Csi(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) | NnError::ZeroNorm => CliError::Numeric(e.to_string()),
            NnError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite(_) => CliError::Numeric(e.to_string()),
            TrainError::Io(_) | TrainError::Csv(_) => CliError::Io(e.to_string()),
            TrainError::Nn(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) | MetricsError::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
