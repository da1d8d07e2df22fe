use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid config file, flag value or input record shape.
    #[error("schema error: {0}")]
    Schema(String),
    /// A required input or upstream run output does not exist.
    #[error("missing upstream artifact: {path} ({hint})")]
    MissingUpstream { path: PathBuf, hint: String },
    /// The operation itself failed.
    #[error("{0}")]
    Operation(String),
}

impl CliError {
    pub fn missing(path: &Path, hint: impl Into<String>) -> Self {
        Self::MissingUpstream { path: path.to_path_buf(), hint: hint.into() }
    }

    pub fn op(e: impl std::fmt::Display) -> Self {
        Self::Operation(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 2,
            Self::MissingUpstream { .. } => 3,
            Self::Operation(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Schema(_) => "schema",
            Self::MissingUpstream { .. } => "missing_upstream",
            Self::Operation(_) => "operation",
        }
    }

    /// One-line JSON error report written to stderr.
    pub fn report(&self, command: &str) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            command: &'a str,
            kind: &'a str,
            exit_code: i32,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<String>,
        }
        let path = match self {
            Self::MissingUpstream { path, .. } => Some(path.display().to_string()),
            _ => None,
        };
        let r = Report { command, kind: self.kind(), exit_code: self.exit_code(), message: self.to_string(), path };
        serde_json::json!({ "error": r }).to_string()
    }
}

impl From<phyto_core::ingest::IngestError> for CliError {
    fn from(e: phyto_core::ingest::IngestError) -> Self {
        use phyto_core::ingest::IngestError as E;
        match e {
            E::NotFound(p) => Self::missing(Path::new(&p), "input not found"),
            E::Schema { .. } => Self::Schema(e.to_string()),
            other => Self::op(other),
        }
    }
}

impl From<phyto_core::dataset::BuildError> for CliError {
    fn from(e: phyto_core::dataset::BuildError) -> Self {
        use phyto_core::dataset::BuildError as E;
        match e {
            E::Schema { .. } | E::InvalidParams(_) => Self::Schema(e.to_string()),
            other => Self::op(other),
        }
    }
}

impl From<phyto_core::harness::TrainError> for CliError {
    fn from(e: phyto_core::harness::TrainError) -> Self {
        use phyto_core::harness::TrainError as E;
        match e {
            E::InvalidConfig(_) => Self::Schema(e.to_string()),
            other => Self::op(other),
        }
    }
}

impl From<phyto_core::social::FilterError> for CliError {
    fn from(e: phyto_core::social::FilterError) -> Self {
        use phyto_core::social::FilterError as E;
        match e {
            E::Schema { .. } => Self::Schema(e.to_string()),
            other => Self::op(other),
        }
    }
}
