use std::path::PathBuf;

use supermarket_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STABILITY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration and I/O problems, 3 for unstable models, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::Stability { .. } => EXIT_STABILITY,
                CoreError::Numeric(_)
                | CoreError::IntegrationBlowUp { .. }
                | CoreError::DegenerateState { .. }
                | CoreError::Fit(_) => EXIT_NUMERIC,
                CoreError::Validation(_)
                | CoreError::Structural(_)
                | CoreError::Precondition(_)
                | CoreError::Config(_)
                | CoreError::Output(_) => EXIT_CONFIG,
            },
            CliError::Read { .. }
            | CliError::Parse(_)
            | CliError::Config(_)
            | CliError::Write { .. } => EXIT_CONFIG,
        }
    }
}
