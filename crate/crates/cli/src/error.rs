use std::path::Path;

use frozenfeat::corpus::CorpusError;
use frozenfeat::features::FeatureError;
use frozenfeat::partition::PartitionError;
use frozenfeat::textprep::{RuleError, StatsError};
use frozenfeat::trainer::TrainError;
use thiserror::Error;

/// Failure of one command. The variant fixes the exit code: usage and
/// schema problems exit with 1, problems with the data itself with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Schema { .. } => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn schema(path: &Path, message: impl ToString) -> Self {
        CliError::Schema {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    /// Data error prefixed with the file it came from.
    pub fn data_at(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::Ratios(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Data(e.to_string())
    }
}
