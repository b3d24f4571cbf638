use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad node index, non-symmetric matrix, size mismatch.
    #[error("structural error: {0}")]
    Structural(String),

    /// A filter response or parameter outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be inverted is numerically singular.
    #[error("rank error: {0}")]
    Rank(String),

    /// The requested band is not identifiable from the sampling set.
    #[error("observability error: {0}")]
    Observability(String),

    /// A constraint could not be met (threshold unreachable, graph never connected, ...).
    #[error("infeasible: {message} (best achieved: {best})")]
    Infeasible { message: String, best: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. } | Error::Observability(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
