use thiserror::Error;

use crate::qlog::QRange;

pub type Result<T> = std::result::Result<T, QitError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QitError {
    /// Argument outside the domain of a q-deformed function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// `exp_q` argument outside `1 + (1-q)x > 0`; `boundary` is the value of `1 + (1-q)x`.
    #[error("exp_q domain error: 1 + (1-q)x = {boundary} <= 0 (x = {x}, q = {q})")]
    ExpDomain { x: f64, q: f64, boundary: f64 },

    #[error("q = {q} outside the valid range {range} for {what}")]
    QOutOfRange { q: f64, range: QRange, what: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("size budget exceeded: {0}")]
    Size(String),

    #[error("impossible trajectory: zero-probability transition at position {position}")]
    ImpossibleTrajectory { position: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl QitError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        QitError::Argument(msg.into())
    }
}
