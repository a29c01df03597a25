use std::path::PathBuf;

/// Failures of the command-line front end, each tied to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] srrw::Error),
    #[error("{failed} of {total} checks failed")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    /// 1 for failed checks, 2 for bad input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed { .. } => 1,
            CliError::Config { .. } | CliError::Io { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
