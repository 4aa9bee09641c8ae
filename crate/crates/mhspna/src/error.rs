use std::path::Path;

use mhspna_core::error::{BatteryError, CalibrateError, MetricError, NetworkError};
use thiserror::Error;

/// Process-level error classes. Exit codes: domain errors (bad data) exit
/// with 1, I/O, parse and usage errors with 2; success is 0.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } | CliError::Usage(_) => 2,
        }
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CliError::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// I/O or parse failure tied to a file; `detail` keeps whatever
    /// line/column context the underlying error carries.
    pub fn io(path: &Path, detail: impl ToString) -> Self {
        CliError::Io { path: path.display().to_string(), detail: detail.to_string() }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<BatteryError> for CliError {
    fn from(e: BatteryError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        CliError::Domain(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
