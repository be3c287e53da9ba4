use thiserror::Error;

use crate::pair::LiftPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("Sylvester equation unsolvable (condition estimate {condition:.3e})")]
    SylvesterUnsolvable { condition: f64 },

    #[error("{what} is numerically rank deficient (ratio {ratio:.3e})")]
    RankDeficient { what: &'static str, ratio: f64 },

    #[error("{what} is ill-conditioned (condition {condition:.3e} exceeds {limit:.1e})")]
    IllConditioned {
        what: &'static str,
        condition: f64,
        limit: f64,
    },

    #[error("matrix is not tangent to the rank-p manifold (relative normal component {residual:.3e})")]
    NotTangent { residual: f64 },

    #[error("gauge transform rejected: {0}")]
    Gauge(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("Krylov solver failed to reach tolerance after {iterations} iterations (relative residual {relative_residual:.3e})")]
    SolverFailure {
        iterations: usize,
        relative_residual: f64,
        best: Box<LiftPair>,
    },

    #[error("objective oracle: {0}")]
    Oracle(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }
}
