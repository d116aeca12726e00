use std::io;
use std::path::PathBuf;

use erfact_core::data::DataError;
use erfact_core::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// A verification ran and did not pass.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 check failure, 2 usage error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) | CliError::Train(_) => 2,
            CliError::Data(DataError::Input(_)) => 2,
            CliError::Io { .. } | CliError::Data(_) | CliError::Csv(_) => 3,
        }
    }
}
