use thiserror::Error;

/// Errors produced by the solvers, the oracle and the study harness.
#[derive(Debug, Error)]
pub enum FpkError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("evaluation error at ({x}, {y}): {reason}")]
    Evaluation { x: f64, y: f64, reason: String },

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    SolveFailure { reason: String, residual: f64 },

    #[error("invalid invariant measure: {0}")]
    InvalidInvariant(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("quadrature did not converge: last estimate {estimate}, refinement difference {difference:e}")]
    QuadratureNonConvergence { estimate: f64, difference: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl FpkError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FpkError::Config(msg.into())
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_config(&self) -> bool {
        matches!(self, FpkError::Config(_) | FpkError::Json(_))
    }

    pub fn is_solve_failure(&self) -> bool {
        matches!(
            self,
            FpkError::SolveFailure { .. } | FpkError::InvalidInvariant(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FpkError>;
