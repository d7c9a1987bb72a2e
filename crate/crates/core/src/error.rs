use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AwcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AwcError {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Radii construction could not find a next radius satisfying the
    /// neighbor-growth bound.
    #[error("no admissible radius after h = {radius}: point {point} grows from {from} to {to} neighbors")]
    NoValidStep {
        point: usize,
        radius: f64,
        from: usize,
        to: usize,
    },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: u64,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}, column {column}: cannot parse `{value}` as a number")]
    NonNumeric {
        path: PathBuf,
        row: u64,
        column: usize,
        value: String,
    },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl AwcError {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        AwcError::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            AwcError::Domain { .. } => "domain",
            AwcError::InvalidInput(_) => "invalid_input",
            AwcError::Config(_) => "config",
            AwcError::NoValidStep { .. } => "radii",
            AwcError::UnknownStrategy { .. } => "unknown_strategy",
            AwcError::Calibration(_) => "calibration",
            AwcError::EmptyFile { .. } => "empty_file",
            AwcError::RaggedRow { .. } => "ragged_row",
            AwcError::NonNumeric { .. } => "non_numeric",
            AwcError::Format { .. } => "format",
            AwcError::Io { .. } => "io",
            AwcError::Csv { .. } => "csv",
        }
    }
}
