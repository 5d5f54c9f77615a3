use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FairselError> = std::result::Result<T, E>;

/// Everything that can go wrong between ingestion and report emission.
#[derive(Debug, Error)]
pub enum FairselError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a real number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

/// Coarse failure class; the CLI maps these onto exit codes 1/2/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl FairselError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FairselError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        FairselError::Config {
            field,
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            FairselError::Config { .. } => ErrorClass::Config,
            FairselError::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
