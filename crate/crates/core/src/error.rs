use thiserror::Error;

/// Errors surfaced by the loss kernels, data pipeline and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Numerical-domain violation (non-finite input, bad scale, negative probability, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A class index outside `[0, K)`.
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },

    /// Invalid loss or experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A training run produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }
}
