use std::path::PathBuf;

use jere_core::data::DataError;
use jere_core::evaluation::EvalError;
use jere_core::trainer::{CheckpointError, TrainError};
use jere_core::ModelError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("output {0} already exists")]
    OutputExists(PathBuf),
    #[error("{path}: {count} invalid lines, first: {first}")]
    InvalidLines { path: PathBuf, count: usize, first: String },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::OutputExists(_) => "output_exists",
            CliError::InvalidLines { .. } | CliError::Data(_) => "data",
            CliError::Mismatch(_) => "mismatch",
            CliError::Model(_) => "model",
            CliError::Train(TrainError::Checkpoint(_)) | CliError::Checkpoint(_) => "checkpoint",
            CliError::Train(_) => "train",
            CliError::Eval(_) => "eval",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One JSON object for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}
