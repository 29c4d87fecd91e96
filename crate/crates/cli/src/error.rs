use std::path::{Path, PathBuf};

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("missing artifact {}", .0.display())]
    Missing(PathBuf),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("configuration hash {found} does not match the run directory ({expected})")]
    ConfigMismatch { expected: String, found: String },

    #[error(transparent)]
    Core(#[from] cpod_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn kind(&self) -> &'static str {
        use cpod_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Missing(_) | CliError::Core(E::Missing(_)) => "missing_artifact",
            CliError::Io { .. } | CliError::Core(E::Io(_)) => "io",
            CliError::Json { .. } => "json",
            CliError::ConfigMismatch { .. } => "config_mismatch",
            CliError::Core(E::Invalid(_)) => "invalid_config",
            CliError::Core(E::Sample { .. }) => "sample_failure",
            CliError::Core(E::Format(_) | E::Checksum { .. }) => "corrupt_artifact",
            CliError::Core(_) => "numerical",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Missing(p) | CliError::Io { path: p, .. } | CliError::Json { path: p, .. } => {
                body["path"] = json!(p.display().to_string());
            }
            CliError::Core(cpod_core::Error::Sample { index, .. }) => body["sample"] = json!(index),
            _ => {}
        }
        json!({ "error": body }).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
