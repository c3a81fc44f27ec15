use thiserror::Error;

use crate::solver::Solution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("main channel Gram matrix W1 is zero")]
    ZeroChannel,

    #[error("degenerate dual point: mu1 I + sum mu2k W2k is zero")]
    DegenerateDuals,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid matrix {matrix}: {reason}")]
    InvalidMatrix { matrix: String, reason: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("refused: {0}")]
    Refused(String),

    /// Outer iteration limit hit. Carries the best iterate with its residuals.
    #[error("dual iteration did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    NotConverged(Box<Solution>),
}
