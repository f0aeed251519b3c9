use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelWeights;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Distribution parameters violate their invariants.
    #[error("invalid parameters: {0}")]
    ParamDomain(String),

    /// A function was evaluated outside its support or level range.
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Model or report document does not match the expected schema.
    #[error("format error: {0}")]
    Format(String),

    #[error("ingestion error{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingestion { row: Option<usize>, message: String },

    #[error("training aborted: {0}")]
    TrainingAbort(Box<TrainingAbort>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ingestion(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Ingestion {
            row,
            message: message.into(),
        }
    }
}

/// Diagnostics attached to a diverged or otherwise failed training run.
#[derive(Debug)]
pub struct TrainingAbort {
    pub reason: String,
    /// Epoch index (0-based) in which the failure was detected.
    pub epoch: Option<usize>,
    /// Weights as of the last step whose loss and gradient were finite.
    pub last_good: Option<ModelWeights>,
}

impl std::fmt::Display for TrainingAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.epoch {
            Some(epoch) => write!(f, "{} (epoch {epoch})", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

impl Error {
    pub(crate) fn abort(reason: impl Into<String>) -> Self {
        Error::TrainingAbort(Box::new(TrainingAbort {
            reason: reason.into(),
            epoch: None,
            last_good: None,
        }))
    }
}
