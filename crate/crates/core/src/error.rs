use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document failed schema or semantic validation. `path` points at the
    /// offending field, e.g. `links[3].axis`.
    #[error("invalid document at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: String, expected: usize, actual: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged: {0}")]
    Diverged(String),

    #[error("non-finite loss during update: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }

    pub fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension { context: context.into(), expected, actual }
    }

    /// True for errors caused by user-supplied configuration or documents.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Schema { .. } | Error::Config(_) | Error::Json(_))
    }
}
