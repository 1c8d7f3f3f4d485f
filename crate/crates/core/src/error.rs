use thiserror::Error;

use crate::svm_dual::DualSolution;

pub type Result<T> = std::result::Result<T, MatkError>;

#[derive(Debug, Error)]
pub enum MatkError {
    #[error("invalid target {0}: margin losses require a label in {{-1, +1}}")]
    InvalidTarget(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate target range: all targets equal {0}")]
    DegenerateRange(f64),

    #[error("dual solver stopped after {iterations} iterations with stationarity {residual:e}")]
    Convergence {
        iterations: usize,
        residual: f64,
        last: Box<DualSolution>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MatkError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        MatkError::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MatkError::Domain(msg.into())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(MatkError::Shape { expected, got })
    }
}
