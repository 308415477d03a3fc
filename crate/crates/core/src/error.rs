//! Error type shared by all toolkit operations.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An ODE right-hand side or integrand produced a non-finite value.
    /// Carries the node time at which integration had to stop.
    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: String, t: f64 },

    #[error("invalid control signal: {0}")]
    InvalidSignal(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid needle variation: {0}")]
    InvalidNeedle(String),

    #[error("invalid homotopy: {0}")]
    InvalidHomotopy(String),

    #[error("enumeration guard exceeded: {0}")]
    EnumerationGuard(String),

    #[error("unknown builtin problem '{0}'")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, Error>;
