//! Shared error type for the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid world, task, or pipeline configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage was asked to run without its upstream artifact.
    #[error("missing artifact `{path}` (produced by stage `{stage}`); run that stage first")]
    MissingArtifact { path: String, stage: String },

    /// Artifact exists but was produced under a different configuration.
    #[error("lineage mismatch for `{path}`: produced by config {found}, current config is {expected}; rerun upstream stages or pass --force")]
    Lineage {
        path: String,
        found: String,
        expected: String,
    },

    /// Remote estimator gave up after exhausting retries.
    #[error("estimator error (persona {persona}): {reason}")]
    Estimator { persona: u32, reason: String },

    /// Malformed artifact contents.
    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }

    pub fn estimator(persona: u32, reason: impl Into<String>) -> Self {
        Error::Estimator {
            persona,
            reason: reason.into(),
        }
    }
}
