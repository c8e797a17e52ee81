use thiserror::Error;

use crate::network::ModelParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a named constraint, e.g. `"C2+C3 < 0.6"`.
    #[error("configuration error: constraint `{constraint}` violated ({detail})")]
    Config { constraint: String, detail: String },

    #[error("sample generation failed: {0}")]
    Generation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced a non-finite loss or weight. `last_finite` holds the
    /// model from the last iteration where everything was finite.
    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite {
        iteration: usize,
        what: String,
        last_finite: Box<ModelParams>,
    },

    /// A run aborted on a non-finite value; the last finite model was
    /// written to `dump`.
    #[error("run aborted at iteration {iteration}: {what}; last finite model written to {}", dump.display())]
    Aborted {
        iteration: usize,
        what: String,
        dump: std::path::PathBuf,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(constraint: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            constraint: constraint.into(),
            detail: detail.into(),
        }
    }
}
