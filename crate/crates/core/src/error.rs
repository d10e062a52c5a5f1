use thiserror::Error;

/// Errors produced by the solver and its diagnostics.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A physical or numerical parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The flow map lost invertibility (1 + dw/dy <= 0 somewhere).
    #[error("particle crossing at node {node}{}", fmt_time(.time))]
    ParticleCrossing { node: usize, time: Option<f64> },

    /// The requested time step violates the stability restriction.
    #[error("time step {dt} exceeds stability limit {limit} at t = {time}")]
    CflViolation { dt: f64, limit: f64, time: f64 },

    /// A field became NaN or infinite during stepping or evaluation.
    #[error("non-finite value in {what} at t = {time}")]
    NonFinite { what: &'static str, time: f64 },

    /// A state or field does not live on the expected grid.
    #[error("field length {got} does not match grid with {expected} nodes")]
    GridMismatch { got: usize, expected: usize },

    /// The Hardy-quotient denominator vanished (field identically zero).
    #[error("hardy ratio denominator is zero")]
    ZeroDenominator,

    /// A decay fit could not be performed on the supplied series.
    #[error("decay fit failed: {0}")]
    FitFailed(&'static str),
}

fn fmt_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
