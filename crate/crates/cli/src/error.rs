use thiserror::Error;

/// Failures of the runner, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("run aborted in member {member} at step {step}: {source}")]
    Abort {
        member: usize,
        step: usize,
        source: locpert_core::Error,
    },

    #[error("run failed: {0}")]
    Runtime(#[from] locpert_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{failed} verification check(s) failed")]
    Verification { failed: usize },
}

impl CliError {
    /// 1 configuration, 2 runtime abort, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Abort { .. } | CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::Verification { .. } => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
