use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum RunError {
    /// Malformed or inconsistent configuration (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// Unreadable or invalid input data (exit 3).
    #[error("data error: {0}")]
    Data(String),
    /// Training produced non-finite values (exit 4).
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) | RunError::Io { .. } => 3,
            RunError::Divergence(_) => 4,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<hrnn_core::Error> for RunError {
    fn from(e: hrnn_core::Error) -> Self {
        use hrnn_core::Error as E;
        if e.is_divergence() {
            return RunError::Divergence(e.to_string());
        }
        match e.root_cause() {
            E::InvalidArgument(_) | E::InvalidSpec(_) => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
