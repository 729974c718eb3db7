use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] vrnmt::Error),

    #[error("gradient check failed: max relative error {error:e} exceeds {threshold:e}")]
    GradCheck { error: f64, threshold: f64 },
}

impl CliError {
    /// 1 usage, 2 data or format, 3 numerical failure.
    pub fn exit_code(&self) -> ExitCode {
        use vrnmt::Error as E;
        let code = match self {
            CliError::Usage(_) | CliError::Core(E::Invalid(_)) => 1,
            CliError::Core(E::NonFinite(_) | E::Graph(_)) | CliError::GradCheck { .. } => 3,
            CliError::Core(_) => 2,
        };
        ExitCode::from(code)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
