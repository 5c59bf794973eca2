use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Adaptive quadrature hit its subdivision limit before meeting the tolerance.
    #[error("quadrature did not converge on [{lower}, {upper}]: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureNonConvergence {
        lower: f64,
        upper: f64,
        estimate: f64,
        error_bound: f64,
    },

    /// The density is too small to divide by at this point.
    #[error("density underflow at x = {x:e} (p(x) = {density:e})")]
    DensityUnderflow { x: f64, density: f64 },

    /// Evaluation point lies outside the open support.
    #[error("x = {x} is not interior to the support ({lower}, {upper})")]
    NotInterior { x: f64, lower: f64, upper: f64 },

    /// Evaluation point lies outside the clipped quantile band.
    #[error("x = {x} lies outside the quantile band [{q_lo}, {q_hi}] (F(x) = {level:e})")]
    BoundaryProximity { x: f64, level: f64, q_lo: f64, q_hi: f64 },

    /// Root bracket for a quantile could not be found.
    #[error("could not bracket quantile q = {0}")]
    QuantileBracket(f64),

    /// A value that must be finite was not.
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid argument or configuration.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Density expression could not be parsed or evaluated.
    #[error("expression error at position {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    /// Configuration file problem.
    #[error("configuration error: {0}")]
    Config(String),

    /// Too many samples rejected as outside the target support.
    #[error("{outside} of {total} samples fell outside the support (limit {limit_fraction})")]
    OutsideSupport { outside: usize, total: usize, limit_fraction: f64 },

    /// Two estimators of the same quantity disagree.
    #[error("estimators disagree: {a:e} vs {b:e} ({sigmas:.2} combined standard errors)")]
    EstimatorDisagreement { a: f64, b: f64, sigmas: f64 },

    /// Assignment size above the configured cap.
    #[error("cloud size {n} exceeds the exact-assignment cap {cap}; subsample first")]
    AssignmentCap { n: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(context: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
            value,
        })
    }
}
