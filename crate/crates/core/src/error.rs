use thiserror::Error;

/// Errors produced by the model, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function (e.g. a negative protein level).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model, grid or run specification violates its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    /// A candidate peak had prominence too close to the threshold to decide.
    #[error("ambiguous shape: peak at x = {x} has prominence {prominence:e} below threshold {threshold:e}")]
    AmbiguousShape {
        x: f64,
        prominence: f64,
        threshold: f64,
    },

    #[error("step rejected at t = {time}: clipped mass {clipped:e} exceeds {limit:e}")]
    StepRejected { time: f64, clipped: f64, limit: f64 },

    #[error("non-finite value in density at t = {time} (cell {cell})")]
    NonFinite { time: f64, cell: usize },

    #[error("no linear regime found in entropy trace: {0}")]
    NoLinearRegime(String),

    #[error("stationary iteration did not converge by t = {time}: last drift {drift:e}")]
    NotConverged { time: f64, drift: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
