use thiserror::Error;

/// Errors reported by the analysis, sizing, simulation and identification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("network is singular or ill-conditioned (pivot ratio {pivot_ratio:e})")]
    Conditioning { pivot_ratio: f64 },

    #[error("degenerate sweep axis `{axis}`: {reason}")]
    DegenerateAxis { axis: String, reason: &'static str },

    #[error("controller sizing failed on {relation}: {detail}")]
    Sizing { relation: &'static str, detail: String },

    #[error("invalid simulation configuration: {0}")]
    Config(String),

    #[error("integration produced a non-finite state at t = {t:.6} s")]
    Integration { t: f64 },

    #[error("optimum at grid boundary (v = {v_load} V, phi = {phi_load} rad); extend the sweep")]
    UnbracketedOptimum { v_load: f64, phi_load: f64, power: f64 },

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("malformed surface: {0}")]
    Surface(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

pub(crate) fn require_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}
