use std::path::PathBuf;

/// Errors surfaced by the command layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] leap_core::Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for numeric or verification
    /// failures.
    pub fn exit_code(&self) -> i32 {
        use leap_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Parse { .. } | CliError::Config(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Core(e) => match e {
                E::Numeric(_) | E::DegenerateDensity(_) | E::Sampling(_) => 2,
                _ => 1,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
