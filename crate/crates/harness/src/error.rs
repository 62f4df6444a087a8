use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] wrapped_spd::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or invalid file content. `line` is 1-based.
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config: {0}")]
    Config(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        HarnessError::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    /// Process exit code: 2 invalid input, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if e.is_input_error() => 2,
            HarnessError::Core(_) => 3,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 4,
            HarnessError::Argument(_) | HarnessError::Config(_) => 2,
        }
    }
}
