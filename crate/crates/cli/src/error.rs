use std::path::PathBuf;

use rashomon_core::error::{BuildError, CheckError, FormatError, LearnError, RashomonError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing upstream artifact {}; run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("malformed artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error("state-space cap of {0} states exceeded")]
    StateCap(usize),
    #[error(transparent)]
    Build(BuildError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Rashomon(RashomonError),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::StateCap(cap) => CliError::StateCap(cap),
            other => CliError::Build(other),
        }
    }
}

impl From<RashomonError> for CliError {
    fn from(e: RashomonError) -> Self {
        match e {
            RashomonError::Build(b) => b.into(),
            other => CliError::Rashomon(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Artifact { .. } => "malformed_artifact",
            CliError::StateCap(_) => "state_cap",
            CliError::Build(_) => "build",
            CliError::Check(_) => "check",
            CliError::Learn(_) => "learn",
            CliError::Format(_) => "format",
            CliError::Rashomon(_) => "rashomon",
            CliError::Io { .. } => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } | CliError::Artifact { .. } => 3,
            CliError::StateCap(_) => 4,
            _ => 1,
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}
