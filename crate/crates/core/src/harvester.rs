//! Lumped model of a resonant piezoelectric vibration harvester.
//!
//! The harvester is described on its electrical side by the tuple
//! `(delta, rho, f_res, c_p, q_factor)`. Without `q_factor` the mechanical
//! set `{K, M, D, alpha}` would be known only up to a scale; the quality
//! factor pins it.
//!
//! All phasors are referenced to the base acceleration `A sin(w t)`, whose
//! phasor is the real number `A`. Accelerations are in g.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Result};
use crate::ComplexValue;

/// Standard gravity used to convert g to m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Mechanical quality factor of the bundled PPA-4011 preset.
///
/// Calibrated so that a matched load settles within about 100 ms after a
/// 0 -> 1 g step (see [`crate::sim::calibrate_q`]).
pub const DEFAULT_Q: f64 = 23.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvesterParams {
    /// Open-circuit sensitivity `M/alpha`, volts per g.
    #[serde(rename = "delta_v_per_g")]
    pub delta: f64,
    /// Coupling coefficient between `C_p` and the mechanical capacitance.
    pub rho: f64,
    /// Mechanical resonance frequency, Hz.
    #[serde(rename = "f_res_hz")]
    pub f_res: f64,
    /// Piezoelectric output capacitance, F.
    #[serde(rename = "c_p_farad")]
    pub c_p: f64,
    pub q_factor: f64,
}

/// Electrical equivalent of the mechanical branch: `L_M = M/alpha^2`,
/// `C_K = alpha^2/K`, `R_D = D/alpha^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentCircuit {
    pub l_m: f64,
    pub c_k: f64,
    pub r_d: f64,
}

/// Mechanical parameters in SI units (N/m, kg, N s/m, N/V).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalSet {
    pub k: f64,
    pub m: f64,
    pub d: f64,
    pub alpha: f64,
}

/// Optimal load in both of its equivalent forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalImpedance {
    /// Conjugate of the source impedance.
    pub series: ComplexValue,
    /// Parallel resistance, ohms.
    pub r_opt: f64,
    /// Parallel (positive) reactance, ohms.
    pub x_opt: f64,
}

impl HarvesterParams {
    pub fn new(delta: f64, rho: f64, f_res: f64, c_p: f64, q_factor: f64) -> Result<Self> {
        let h = Self {
            delta,
            rho,
            f_res,
            c_p,
            q_factor,
        };
        h.validate()?;
        Ok(h)
    }

    /// MIDE PPA-4011 on the shaker rig: 8 V/g, rho = 0.9, 137.6 Hz, 405 nF.
    pub fn ppa4011() -> Self {
        Self {
            delta: 8.0,
            rho: 0.9,
            f_res: 137.6,
            c_p: 405e-9,
            q_factor: DEFAULT_Q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("delta", self.delta)?;
        require_positive("rho", self.rho)?;
        require_positive("f_res", self.f_res)?;
        require_positive("c_p", self.c_p)?;
        require_positive("q_factor", self.q_factor)?;
        Ok(())
    }

    pub fn omega_res(&self) -> f64 {
        2.0 * PI * self.f_res
    }

    /// `1 / (w_res C_p)`, the natural impedance scale of the harvester.
    fn x_scale(&self) -> f64 {
        1.0 / (self.omega_res() * self.c_p)
    }

    pub fn equivalent_circuit(&self) -> EquivalentCircuit {
        let w = self.omega_res();
        let r_d = self.rho * self.x_scale();
        // Q = w M / D  =>  L_M = Q R_D / w, and L_M C_K w^2 = 1.
        let l_m = self.q_factor * r_d / w;
        let c_k = 1.0 / (w * w * l_m);
        EquivalentCircuit { l_m, c_k, r_d }
    }

    /// Mechanical set in SI units.
    pub fn mechanical(&self) -> MechanicalSet {
        let w = self.omega_res();
        // delta is in V/g, so M/alpha in SI is delta / g0.
        let delta_si = self.delta / STANDARD_GRAVITY;
        // alpha^2 = w D C_p / rho with D = w M / Q and alpha = M / delta_si.
        let m = w * w * self.c_p * delta_si * delta_si / (self.rho * self.q_factor);
        let k = w * w * m;
        MechanicalSet {
            k,
            m,
            d: k / (w * self.q_factor),
            alpha: m / delta_si,
        }
    }

    /// Series output impedance `R_p + j X_p`.
    pub fn source_impedance(&self) -> ComplexValue {
        let s = self.x_scale();
        let den = 1.0 + self.rho * self.rho;
        ComplexValue::new(s * self.rho / den, -s * self.rho * self.rho / den)
    }

    /// Open-circuit voltage phasor for an acceleration amplitude in g.
    pub fn open_circuit_voltage(&self, a_max: f64) -> ComplexValue {
        ComplexValue::new(self.delta * a_max, 0.0) / ComplexValue::new(1.0, self.rho)
    }

    /// The optimal load. It takes no acceleration argument: the optimum does
    /// not move with the vibration amplitude.
    pub fn optimal_impedance(&self) -> OptimalImpedance {
        let s = self.x_scale();
        OptimalImpedance {
            series: self.source_impedance().conj(),
            r_opt: self.rho * s,
            x_opt: s,
        }
    }

    /// Power delivered into the optimal load, watts.
    pub fn max_power(&self, a_max: f64) -> f64 {
        let va = self.delta * a_max;
        va * va * self.omega_res() * self.c_p / (8.0 * self.rho)
    }

    /// Amplitude (V) and phase (rad) of the optimal load voltage generator.
    pub fn optimal_generator(&self, a_max: f64) -> (f64, f64) {
        (self.delta * a_max / 2.0, 0.0)
    }

    /// Checked variant of [`Self::max_power`].
    pub fn try_max_power(&self, a_max: f64) -> Result<f64> {
        require_non_negative("a_max", a_max)?;
        Ok(self.max_power(a_max))
    }
}

impl MechanicalSet {
    pub fn omega_res(&self) -> f64 {
        (self.k / self.m).sqrt()
    }

    pub fn q_factor(&self) -> f64 {
        self.k / (self.omega_res() * self.d)
    }

    /// Coupling coefficient recomputed from the mechanical set.
    pub fn rho(&self, c_p: f64) -> f64 {
        self.omega_res() * self.d * c_p / (self.alpha * self.alpha)
    }

    /// `(delta A)^2 alpha^2 / (8 D)`, with `delta` in V/g and `a_max` in g.
    pub fn max_power(&self, delta: f64, a_max: f64) -> f64 {
        let va = delta * a_max;
        va * va * self.alpha * self.alpha / (8.0 * self.d)
    }

    pub fn equivalent_circuit(&self) -> EquivalentCircuit {
        let a2 = self.alpha * self.alpha;
        EquivalentCircuit {
            l_m: self.m / a2,
            c_k: a2 / self.k,
            r_d: self.d / a2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rig() -> HarvesterParams {
        HarvesterParams::ppa4011()
    }

    #[test]
    fn source_impedance_of_rig() {
        let z = rig().source_impedance();
        assert_relative_eq!(z.re, 1420.073, max_relative = 1e-6);
        assert_relative_eq!(z.im, -1278.066, max_relative = 1e-6);
    }

    #[test]
    fn source_impedance_limits() {
        let mut h = rig();
        h.rho = 1e-9;
        let z = h.source_impedance();
        assert!(z.re.abs() < 1e-5 && z.im.abs() < 1e-10);

        h.rho = 1.0;
        let s = h.omega_res() * h.c_p;
        let z = h.source_impedance();
        assert_relative_eq!(z.re, 1.0 / (2.0 * s), max_relative = 1e-14);
        assert_relative_eq!(z.im, -1.0 / (2.0 * s), max_relative = 1e-14);
    }

    #[test]
    fn open_circuit_voltage() {
        let h = rig();
        let v = h.open_circuit_voltage(1.0);
        assert_relative_eq!(v.norm(), 5.947, max_relative = 2e-4);
        assert_relative_eq!(v.arg().to_degrees(), -41.99, max_relative = 1e-4);
        assert_eq!(h.open_circuit_voltage(0.0).norm(), 0.0);

        let mut weak = h;
        weak.rho = 0.0;
        let v = weak.open_circuit_voltage(1.0);
        assert_eq!(v, ComplexValue::new(8.0, 0.0));
    }

    #[test]
    fn optimal_impedance_forms() {
        let h = rig();
        let opt = h.optimal_impedance();
        assert!((opt.r_opt - 2570.0).abs() / 2570.0 < 5e-3);
        assert!((opt.x_opt - 2856.0).abs() / 2856.0 < 5e-3);
        assert_relative_eq!(opt.series.re, 1420.073, max_relative = 1e-6);
        assert_relative_eq!(opt.series.im, 1278.066, max_relative = 1e-6);

        // R || jX should reproduce the series form.
        let y = ComplexValue::new(1.0 / opt.r_opt, 0.0) + ComplexValue::new(0.0, -1.0 / opt.x_opt);
        let z = y.inv();
        assert_relative_eq!(z.re, opt.series.re, max_relative = 1e-12);
        assert_relative_eq!(z.im, opt.series.im, max_relative = 1e-12);

        let mut unit = h;
        unit.rho = 1.0;
        let o = unit.optimal_impedance();
        assert_eq!(o.r_opt, o.x_opt);
    }

    #[test]
    fn max_power_of_rig() {
        let h = rig();
        let p = h.max_power(1.0);
        assert!((p - 3.1e-3).abs() / 3.1e-3 < 0.02);
        assert_relative_eq!(p, 3.112e-3, max_relative = 1e-3);
        assert_eq!(h.max_power(0.0), 0.0);
        assert_relative_eq!(h.max_power(2.0), 4.0 * p, max_relative = 1e-15);
        assert!(h.try_max_power(-1.0).is_err());
    }

    #[test]
    fn optimal_generator_scales_linearly() {
        let h = rig();
        assert_eq!(h.optimal_generator(1.0), (4.0, 0.0));
        assert_eq!(h.optimal_generator(0.0), (0.0, 0.0));
        assert_eq!(h.optimal_generator(1.25), (5.0, 0.0));
    }

    #[test]
    fn divider_at_optimum_is_real() {
        let h = rig();
        let zp = h.source_impedance();
        let zo = h.optimal_impedance().series;
        let v = h.open_circuit_voltage(1.0) * zo / (zp + zo);
        assert_relative_eq!(v.re, 4.0, max_relative = 1e-9);
        assert!(v.im.abs() < 1e-9 * 4.0);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(HarvesterParams::new(8.0, 0.0, 137.6, 405e-9, 20.0).is_err());
        assert!(HarvesterParams::new(8.0, 0.9, -1.0, 405e-9, 20.0).is_err());
        assert!(HarvesterParams::new(f64::NAN, 0.9, 137.6, 405e-9, 20.0).is_err());
        assert!(HarvesterParams::new(8.0, 0.9, 137.6, 405e-9, 20.0).is_ok());
    }

    fn params() -> impl Strategy<Value = HarvesterParams> {
        (0.5..20.0, 0.05..5.0, 20.0..2000.0, 1e-9..1e-5, 2.0..200.0)
            .prop_map(|(delta, rho, f, c, q)| HarvesterParams::new(delta, rho, f, c, q).unwrap())
    }

    proptest! {
        #[test]
        fn mechanical_set_satisfies_definitions(h in params()) {
            let mech = h.mechanical();
            let w = h.omega_res();
            prop_assert!(((mech.q_factor() - h.q_factor) / h.q_factor).abs() < 1e-12);
            prop_assert!(((mech.rho(h.c_p) - h.rho) / h.rho).abs() < 1e-12);
            prop_assert!(((mech.omega_res() - w) / w).abs() < 1e-12);
            let dr = mech.d / (mech.alpha * mech.alpha);
            let expected = h.rho / (w * h.c_p);
            prop_assert!(((dr - expected) / expected).abs() < 1e-12);
            let delta = mech.m / mech.alpha * STANDARD_GRAVITY;
            prop_assert!(((delta - h.delta) / h.delta).abs() < 1e-12);
        }

        #[test]
        fn equivalent_circuit_forms_agree(h in params()) {
            let a = h.mechanical().equivalent_circuit();
            let b = h.equivalent_circuit();
            prop_assert!(((a.l_m - b.l_m) / b.l_m).abs() < 1e-12);
            prop_assert!(((a.c_k - b.c_k) / b.c_k).abs() < 1e-12);
            prop_assert!(((a.r_d - b.r_d) / b.r_d).abs() < 1e-12);
        }

        #[test]
        fn max_power_forms_agree(h in params(), a in 0.01f64..5.0) {
            let p1 = h.max_power(a);
            let p2 = h.mechanical().max_power(h.delta, a);
            prop_assert!(((p1 - p2) / p1).abs() < 1e-12);
        }

        #[test]
        fn optimum_is_conjugate_and_amplitude_free(h in params()) {
            let opt = h.optimal_impedance();
            let zp = h.source_impedance();
            prop_assert_eq!(opt.series.re, zp.re);
            prop_assert_eq!(opt.series.im, -zp.im);
            prop_assert!(zp.im < 0.0);
        }
    }
}
