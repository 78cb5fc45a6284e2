use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// 2 for anything the user can fix in the config, 3 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Read { .. } => 2,
            Self::Numeric(_) => 3,
            _ => 1,
        }
    }
}

impl From<specdiff_core::Error> for CliError {
    fn from(e: specdiff_core::Error) -> Self {
        use specdiff_core::Error as E;
        match e {
            E::Domain { .. } | E::InvalidArgument(_) => Self::Config(e.to_string()),
            E::Numeric(_) | E::BudgetExceeded { .. } => Self::Numeric(e.to_string()),
        }
    }
}
