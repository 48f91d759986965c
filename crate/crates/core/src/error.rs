use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller broke a precondition (shape mismatch, empty batch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("label scheme error: {0}")]
    Scheme(String),

    #[error("degenerate cross-section: {0}")]
    DegenerateSection(String),

    #[error("non-finite value in encoder block {block}")]
    Numeric { block: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("missing cross-section for period {0}")]
    Gap(String),

    #[error("missing artifact {}: run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("i/o error on {}: {source}", path.display())]
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
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
