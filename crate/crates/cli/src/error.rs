use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    ConfigLine { path: String, line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("run diverged (sweep value {value}, seed {seed}): {source}")]
    Diverged {
        value: String,
        seed: u64,
        #[source]
        source: bifilter::Error,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] bifilter::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigLine { .. } | CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            _ => 1,
        }
    }
}
