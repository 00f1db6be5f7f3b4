use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("linear solver breakdown after {iterations} iterations (residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },

    #[error("matrix is not symmetric: max |C - C^T| = {0:e}")]
    Asymmetric(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("fixed-point iteration did not converge at step {step} (update {update:e})")]
    FixedPoint { step: usize, update: f64 },

    #[error("training aborted at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },

    #[error("connection lost during request {request_id}: {reason}")]
    ConnectionLost { request_id: u64, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(what: &'static str, expected: usize, found: usize) -> Self {
        Error::ShapeMismatch {
            what,
            expected,
            found,
        }
    }
}

pub(crate) fn ensure_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::shape(what, expected, found))
    }
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
