use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config value at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint was trained with config {expected}, but the given config hashes to {got}")]
    HashMismatch { expected: String, got: String },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] rismec_core::env::EnvError),
    #[error(transparent)]
    Learn(#[from] rismec_learn::LearnError),
    #[error("self-test failures: {0}")]
    SelfTest(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "config_parse",
            CliError::Invalid { .. } => "config_invalid",
            CliError::Io { .. } => "io",
            CliError::HashMismatch { .. } => "config_hash_mismatch",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Usage(_) => "usage",
            CliError::Env(_) => "environment",
            CliError::Learn(_) => "agent",
            CliError::SelfTest(_) => "selftest",
        }
    }

    /// Single-line machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Parse { path, .. } | CliError::Invalid { path, .. } = self {
            v["path"] = json!(path);
        }
        v.to_string()
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
    }
}
