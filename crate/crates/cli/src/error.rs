use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, unknown key, unreadable input: the invocation is
    /// wrong rather than the computation.
    #[error("{0}")]
    Usage(String),
    #[error("missing input {}", path.display())]
    MissingInput { path: PathBuf },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] staircase_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput { path }
        } else {
            CliError::Io { path, source }
        }
    }

    /// 2 for usage errors, 1 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingInput { .. } | CliError::Parse { .. } => 2,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }

    /// Short machine-readable tag used as the first field of the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingInput { .. } => "missing-input",
            CliError::Parse { .. } => "parse",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "runtime",
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
