use std::path::{Path, PathBuf};

use lgr_core::LgrError;

/// Errors of the command-line tools. Each class maps to a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] LgrError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code; stable across releases.
    ///
    /// | code | class |
    /// |------|-------|
    /// | 2 | bad command line or argument value |
    /// | 3 | configuration failed validation |
    /// | 4 | file could not be read or written |
    /// | 5 | malformed CSV data |
    /// | 6 | malformed or incompatible model file |
    /// | 7 | numerical or model error during fitting or prediction |
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Parse(_) => 5,
            CliError::Format(_) => 6,
            CliError::Model(_) => 7,
        }
    }
}
