use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario generation failed: survivor count {survivors} is below 2")]
    TooFewSurvivors { survivors: usize },

    #[error("scenario generation failed: no split layout found within {budget} attempts")]
    GenerationFailed { budget: usize },

    #[error("policy fault at step {t} for agent {agent}: non-finite action")]
    PolicyFault { t: usize, agent: usize },

    #[error("expert database is empty: all {uncovered} scenarios are uncovered")]
    EmptyExpertDb { uncovered: usize },

    #[error("incompatible checkpoint {path}: {reason}")]
    Incompatible { path: PathBuf, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
