use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::ConditioningMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// The load is an ideal linear element or voltage source.
    #[default]
    Behavioral,
    /// Hysteretic comparator, boost inductor and dead time.
    Switched,
}

/// Default step of the behavioral integrator, s.
pub const BEHAVIORAL_DT: f64 = 2e-6;
/// Default step of the switched integrator, s.
pub const SWITCHED_DT: f64 = 2e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Requested step, s. Shortened slightly so that a drive period holds a
    /// whole number of steps.
    pub dt: f64,
    /// Simulated time, s. `None` runs to the end of the profile.
    pub t_end: Option<f64>,
    pub fidelity: Fidelity,
    /// Keep every n-th step in the traces; 0 keeps none.
    pub record_decimation: usize,
    pub q_factor_override: Option<f64>,
    /// Filter time constant of the behavioral negative capacitance, s.
    pub neg_cap_tau: f64,
    pub conditioning: ConditioningMode,
    /// Corner of the two-pole band-limited differentiator used in
    /// approximate conditioning, Hz.
    pub differentiator_corner: f64,
    /// Drive periods in the trailing averaging window.
    pub window_periods: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::behavioral()
    }
}

impl SimConfig {
    pub fn behavioral() -> Self {
        Self {
            dt: BEHAVIORAL_DT,
            t_end: None,
            fidelity: Fidelity::Behavioral,
            record_decimation: 10,
            q_factor_override: None,
            neg_cap_tau: 10e-6,
            conditioning: ConditioningMode::Approximate,
            differentiator_corner: 3.5e3,
            window_periods: 10,
        }
    }

    pub fn switched() -> Self {
        Self {
            dt: SWITCHED_DT,
            fidelity: Fidelity::Switched,
            record_decimation: 50,
            ..Self::behavioral()
        }
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = Some(t_end);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} must be positive, got {v}")));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", self.dt);
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > 0.0) {
                return bad("t_end", t);
            }
        }
        if let Some(q) = self.q_factor_override {
            if !(q.is_finite() && q > 0.0) {
                return bad("q_factor_override", q);
            }
        }
        if !(self.neg_cap_tau.is_finite() && self.neg_cap_tau > 0.0) {
            return bad("neg_cap_tau", self.neg_cap_tau);
        }
        if !(self.differentiator_corner.is_finite() && self.differentiator_corner > 0.0) {
            return bad("differentiator_corner", self.differentiator_corner);
        }
        if self.window_periods == 0 {
            return Err(Error::Config("window_periods must be at least 1".into()));
        }
        Ok(())
    }
}
