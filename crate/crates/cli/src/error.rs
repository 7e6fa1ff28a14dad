use std::path::PathBuf;

use selfsim_core::Error as CoreError;
use thiserror::Error;

/// Exit codes:
///
/// | code | meaning |
/// |------|---------|
/// | 0    | success |
/// | 2    | command-line usage error |
/// | 3    | unreadable config, trace or input dump |
/// | 4    | malformed config (syntax, unknown key, wrong type) |
/// | 5    | config value out of range |
/// | 6    | `verify` ran but a check failed |
/// | 10   | solver or evolver did not converge |
/// | 11   | other numerical or output error |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {msg}")]
    Unreadable { path: PathBuf, msg: String },

    #[error("malformed config: {0}")]
    Parse(String),

    #[error("{key}{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    BadRange { key: String, line: Option<usize>, msg: String },

    #[error("verification failed: {0}")]
    VerifyFailed(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreadable { .. } => 3,
            CliError::Parse(_) => 4,
            CliError::BadRange { .. } => 5,
            CliError::VerifyFailed(_) => 6,
            CliError::Core(e) => match e {
                CoreError::MaxItersExceeded { .. }
                | CoreError::DivergenceDetected { .. }
                | CoreError::NormCeilingExceeded { .. }
                | CoreError::ContinuationStalled { .. }
                | CoreError::StepRejected { .. } => 10,
                _ => 11,
            },
            CliError::Output(_) => 11,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
