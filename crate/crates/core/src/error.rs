use thiserror::Error;

/// Errors produced by mesh construction, the linear and nonlinear solvers,
/// and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (scaled residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical solvers, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverDiverged { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NewtonDiverged { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
