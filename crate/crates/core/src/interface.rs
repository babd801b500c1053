//! Analog control unit of the impedance-emulation interface.
//!
//! The conditioning stage is an inverting summer: the sense voltage
//! `v_m = R_m i_load` enters through `R_y`, the load voltage through
//! `Z_x = R_x + 1/(j w C_x)`, feedback is `R_f`, and the non-inverting input
//! sits at `R_b/(R_a+R_b) v_load`. A hysteretic comparator (`R_p`, `R_q`)
//! keeps its output `v_e` inside a small band, which forces the input
//! admittance of the converter to `1/R_e + j w C_n` with `C_n < 0`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::harvester::HarvesterParams;
use crate::ComplexValue;

/// Parts of the blanking circuit kept for reference. The simulator only
/// consumes [`ControllerParams::dead_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlankingParts {
    pub c_b: f64,
    pub r_tp: f64,
    pub r_tn: f64,
    pub c_dt: f64,
}

impl Default for BlankingParts {
    fn default() -> Self {
        Self {
            c_b: 100e-9,
            r_tp: 30e3,
            r_tn: 100e3,
            c_dt: 100e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub r_m: f64,
    pub r_x: f64,
    pub r_y: f64,
    pub r_f: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub r_p: f64,
    pub r_q: f64,
    pub c_x: f64,
    /// Comparator and op-amp supply `V+`; `V- = -V+`.
    pub v_supply: f64,
    /// Boost inductor, H.
    pub l_b: f64,
    /// Positive DC rail, V.
    pub v_dc: f64,
    /// Magnitude of the negative DC rail, V.
    pub v_n: f64,
    /// Both switches open after every command change, s.
    pub dead_time: f64,
    /// Forward drop of the freewheeling diodes, V.
    pub diode_drop: f64,
    pub aux: BlankingParts,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self::prototype()
    }
}

impl ControllerParams {
    /// Prototype values: 100 mH, 20 ohm sense, 1 nF / 330 k / 8 k / 100 k
    /// conditioning, 275 k / 2 k divider, 150 k / 10 M hysteresis, 5 V rails.
    pub fn prototype() -> Self {
        Self {
            r_m: 20.0,
            r_x: 330e3,
            r_y: 8e3,
            r_f: 100e3,
            r_a: 275e3,
            r_b: 2e3,
            r_p: 150e3,
            r_q: 10e6,
            c_x: 1e-9,
            v_supply: 5.0,
            l_b: 100e-3,
            v_dc: 5.0,
            v_n: 5.0,
            dead_time: 1e-6,
            diode_drop: 0.0,
            aux: BlankingParts::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_m", self.r_m),
            ("r_x", self.r_x),
            ("r_y", self.r_y),
            ("r_f", self.r_f),
            ("r_a", self.r_a),
            ("r_b", self.r_b),
            ("r_q", self.r_q),
            ("c_x", self.c_x),
            ("v_supply", self.v_supply),
            ("l_b", self.l_b),
            ("v_dc", self.v_dc),
            ("v_n", self.v_n),
        ] {
            require_positive(name, v)?;
        }
        // R_p = 0 is a plain comparator.
        require_non_negative("r_p", self.r_p)?;
        require_non_negative("dead_time", self.dead_time)?;
        require_non_negative("diode_drop", self.diode_drop)?;
        Ok(())
    }

    /// `R_b / (R_a + R_b)`.
    pub fn divider(&self) -> f64 {
        self.r_b / (self.r_a + self.r_b)
    }

    /// `R_f R_m / R_y`, the transresistance from load current to `v_e`.
    pub fn sense_gain(&self) -> f64 {
        self.r_f * self.r_m / self.r_y
    }

    pub fn z_x(&self, omega: f64) -> ComplexValue {
        ComplexValue::new(self.r_x, -1.0 / (omega * self.c_x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub v_th: f64,
    pub v_tl: f64,
    pub delta_v_t: f64,
}

pub fn hysteresis_thresholds(cp: &ControllerParams) -> Thresholds {
    let v_th = cp.r_p / cp.r_q * cp.v_supply;
    Thresholds {
        v_th,
        v_tl: -v_th,
        delta_v_t: 2.0 * v_th,
    }
}

/// Corner frequencies `f_x = 1/(2 pi R_x C_x)` and `f_y = 1/(2 pi R_y C_x)`, Hz.
pub fn corner_frequencies(cp: &ControllerParams) -> (f64, f64) {
    (
        1.0 / (2.0 * PI * cp.r_x * cp.c_x),
        1.0 / (2.0 * PI * cp.r_y * cp.c_x),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Full network including the `R_x`/`C_x` pole.
    Exact,
    /// Low-frequency form with `Z_x` replaced by `1/(j w C_x)`.
    #[default]
    Approximate,
}

/// Output phasor of the conditioning stage.
pub fn conditioning_transfer(
    cp: &ControllerParams,
    omega: f64,
    i_load: ComplexValue,
    v_load: ComplexValue,
    mode: ConditioningMode,
) -> ComplexValue {
    let k = cp.divider();
    let sense = -cp.sense_gain() * i_load;
    match mode {
        ConditioningMode::Exact => {
            let rf_zx = cp.r_f / cp.z_x(omega);
            // R_f / (R_y || Z_x) = R_f/R_y + R_f/Z_x
            sense - rf_zx * v_load + k * (1.0 + cp.r_f / cp.r_y + rf_zx) * v_load
        }
        ConditioningMode::Approximate => {
            sense - ComplexValue::new(0.0, omega * cp.r_f * cp.c_x) * v_load
                + k * (1.0 + cp.r_f / cp.r_y) * v_load
        }
    }
}

/// Parallel `R_e || jX_e` seen at the converter input, with `X_e` realized
/// by the negative capacitance `C_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulatedLoad {
    pub r_e: f64,
    /// Reactance at the evaluation frequency, positive.
    pub x_e: f64,
    /// Negative capacitance, F.
    pub c_n: f64,
}

impl EmulatedLoad {
    /// Load with an explicit resistance and negative capacitance, evaluated at `omega`.
    pub fn new(r_e: f64, c_n: f64, omega: f64) -> Self {
        Self {
            r_e,
            x_e: -1.0 / (omega * c_n),
            c_n,
        }
    }

    /// Ideal optimum of `h`: `R_opt || -C_p`.
    pub fn matched(h: &HarvesterParams) -> Self {
        Self::new(h.optimal_impedance().r_opt, -h.c_p, h.omega_res())
    }

    /// `I_load / V_load`.
    pub fn admittance(&self, omega: f64) -> ComplexValue {
        ComplexValue::new(1.0 / self.r_e, omega * self.c_n)
    }
}

/// Input admittance emulated when `v_e` is held at zero.
pub fn emulated_admittance(cp: &ControllerParams, omega: f64) -> EmulatedLoad {
    let r_e = (cp.r_a + cp.r_b) / cp.r_b * cp.r_f * cp.r_m / (cp.r_f + cp.r_y);
    let c_n = -cp.c_x * cp.r_y / cp.r_m;
    EmulatedLoad {
        r_e,
        x_e: cp.r_m / (omega * cp.r_y * cp.c_x),
        c_n,
    }
}

/// Admittance that the exact network forces when `v_e = 0`. Differs from
/// [`emulated_admittance`] as `w` approaches `w_x`.
pub fn emulated_admittance_exact(cp: &ControllerParams, omega: f64) -> ComplexValue {
    let k = cp.divider();
    let rf_zx = cp.r_f / cp.z_x(omega);
    (k * (1.0 + cp.r_f / cp.r_y + rf_zx) - rf_zx) / cp.sense_gain()
}

/// Relative distance between the exact and approximate conditioning outputs
/// for a given operating point.
pub fn conditioning_deviation(
    cp: &ControllerParams,
    omega: f64,
    i_load: ComplexValue,
    v_load: ComplexValue,
) -> f64 {
    let exact = conditioning_transfer(cp, omega, i_load, v_load, ConditioningMode::Exact);
    let approx = conditioning_transfer(cp, omega, i_load, v_load, ConditioningMode::Approximate);
    (exact - approx).norm() / exact.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Validity {
    Valid,
    Marginal,
    Invalid,
}

/// How far the low-frequency approximation is from breaking down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationCheck {
    /// `w_x / w`
    pub ratio_x: f64,
    /// `w_y / w`
    pub ratio_y: f64,
    pub validity: Validity,
}

/// Ratios at or above `silent` pass, at or above `warn` are marginal.
pub fn approximation_check(cp: &ControllerParams, f: f64, warn: f64, silent: f64) -> ApproximationCheck {
    let (fx, fy) = corner_frequencies(cp);
    let (ratio_x, ratio_y) = (fx / f, fy / f);
    let worst = ratio_x.min(ratio_y);
    let validity = if worst >= silent {
        Validity::Valid
    } else if worst >= warn {
        Validity::Marginal
    } else {
        Validity::Invalid
    };
    ApproximationCheck {
        ratio_x,
        ratio_y,
        validity,
    }
}

/// `Delta V_T / (R_f R_m / R_y |I_load|)`: how large the hysteresis band is
/// compared with the swing of the current term in `v_e`. Small values
/// justify treating `v_e` as zero.
pub fn hysteresis_smallness(cp: &ControllerParams, i_load_amplitude: f64) -> f64 {
    hysteresis_thresholds(cp).delta_v_t / (cp.sense_gain() * i_load_amplitude)
}

/// Parts pinned by the designer. Unset parts outside the two sizing
/// relations take their prototype values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParts {
    pub r_m: Option<f64>,
    pub r_x: Option<f64>,
    pub r_y: Option<f64>,
    pub r_f: Option<f64>,
    pub r_a: Option<f64>,
    pub r_b: Option<f64>,
    pub r_p: Option<f64>,
    pub r_q: Option<f64>,
    pub c_x: Option<f64>,
    pub v_supply: Option<f64>,
    pub l_b: Option<f64>,
    pub dead_time: Option<f64>,
}

impl FixedParts {
    /// Everything from the prototype table pinned.
    pub fn from_params(cp: &ControllerParams) -> Self {
        Self {
            r_m: Some(cp.r_m),
            r_x: Some(cp.r_x),
            r_y: Some(cp.r_y),
            r_f: Some(cp.r_f),
            r_a: Some(cp.r_a),
            r_b: Some(cp.r_b),
            r_p: Some(cp.r_p),
            r_q: Some(cp.r_q),
            c_x: Some(cp.c_x),
            v_supply: Some(cp.v_supply),
            l_b: Some(cp.l_b),
            dead_time: Some(cp.dead_time),
        }
    }

    /// The sense, conditioning and feedback parts of the prototype, leaving
    /// the divider to be sized.
    pub fn prototype_core() -> Self {
        let t = ControllerParams::prototype();
        Self {
            r_m: Some(t.r_m),
            r_y: Some(t.r_y),
            r_f: Some(t.r_f),
            c_x: Some(t.c_x),
            ..Self::default()
        }
    }
}

/// Divider leg used when neither `R_a` nor `R_b` is pinned.
pub const DEFAULT_R_B: f64 = 2e3;

/// Default relative tolerance for sizing checks.
pub const DEFAULT_SIZING_TOLERANCE: f64 = 0.02;

const RESISTANCE_RELATION: &str = "resistance relation ((R_a+R_b)/R_b) R_f R_m/(R_f+R_y) = R_opt";
const CAPACITANCE_RELATION: &str = "capacitance relation R_y C_x / R_m = C_p";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingReport {
    pub params: ControllerParams,
    pub target_r_e: f64,
    pub target_c_n: f64,
    pub emulated: EmulatedLoad,
    pub r_error: f64,
    pub c_error: f64,
}

fn rel_err(achieved: f64, target: f64) -> f64 {
    ((achieved - target) / target).abs()
}

/// Chooses the unpinned parts so the interface emulates the optimum of `h`.
pub fn size_controller(h: &HarvesterParams, fixed: &FixedParts, tolerance: f64) -> Result<SizingReport> {
    h.validate()?;
    require_non_negative("tolerance", tolerance)?;
    let base = ControllerParams::prototype();
    let target_r = h.optimal_impedance().r_opt;
    let target_c = h.c_p;
    let underdetermined = |relation| Error::Sizing {
        relation,
        detail: "more than one part left free".into(),
    };

    // Capacitance relation: R_y C_x / R_m = C_p.
    let (r_m, r_y, c_x) = match (fixed.r_m, fixed.r_y, fixed.c_x) {
        (Some(m), Some(y), Some(c)) => (m, y, c),
        (None, Some(y), Some(c)) => (y * c / target_c, y, c),
        (Some(m), None, Some(c)) => (m, target_c * m / c, c),
        (Some(m), Some(y), None) => (m, y, target_c * m / y),
        _ => return Err(underdetermined(CAPACITANCE_RELATION)),
    };

    // Resistance relation.
    let gain_for = |r_f: f64| target_r * (r_f + r_y) / (r_f * r_m);
    let infeasible = |detail: String| Error::Sizing {
        relation: RESISTANCE_RELATION,
        detail,
    };
    let (r_a, r_b, r_f) = match (fixed.r_a, fixed.r_b, fixed.r_f) {
        (Some(a), Some(b), Some(f)) => (a, b, f),
        (a, b, Some(f)) if a.is_none() || b.is_none() => {
            let g = gain_for(f);
            if g <= 1.0 {
                return Err(infeasible(format!(
                    "divider gain {g:.4} must exceed 1; raise R_f or R_m"
                )));
            }
            match (a, b) {
                (None, None) => (DEFAULT_R_B * (g - 1.0), DEFAULT_R_B, f),
                (None, Some(b)) => (b * (g - 1.0), b, f),
                (Some(a), None) => (a, a / (g - 1.0), f),
                _ => unreachable!(),
            }
        }
        (Some(a), Some(b), None) => {
            let kappa = target_r * b / (a + b) / r_m;
            if !(kappa > 0.0 && kappa < 1.0) {
                return Err(infeasible(format!(
                    "R_f/(R_f+R_y) would have to be {kappa:.4}, outside (0, 1)"
                )));
            }
            (a, b, kappa * r_y / (1.0 - kappa))
        }
        _ => return Err(underdetermined(RESISTANCE_RELATION)),
    };

    let params = ControllerParams {
        r_m,
        r_x: fixed.r_x.unwrap_or(base.r_x),
        r_y,
        r_f,
        r_a,
        r_b,
        r_p: fixed.r_p.unwrap_or(base.r_p),
        r_q: fixed.r_q.unwrap_or(base.r_q),
        c_x,
        v_supply: fixed.v_supply.unwrap_or(base.v_supply),
        l_b: fixed.l_b.unwrap_or(base.l_b),
        dead_time: fixed.dead_time.unwrap_or(base.dead_time),
        ..base
    };
    params.validate()?;

    let emulated = emulated_admittance(&params, h.omega_res());
    let r_error = rel_err(emulated.r_e, target_r);
    let c_error = rel_err(-emulated.c_n, target_c);
    // Slack for round-off so that analytically exact solutions pass at zero tolerance.
    let slack = 1e-12;
    if r_error > tolerance + slack {
        return Err(infeasible(format!(
            "R_e = {:.2} ohm vs target {:.2} ohm ({:.3}% off, tolerance {:.3}%)",
            emulated.r_e,
            target_r,
            100.0 * r_error,
            100.0 * tolerance
        )));
    }
    if c_error > tolerance + slack {
        return Err(Error::Sizing {
            relation: CAPACITANCE_RELATION,
            detail: format!(
                "C_n = {:.2} nF vs target {:.2} nF ({:.3}% off, tolerance {:.3}%)",
                emulated.c_n * 1e9,
                -target_c * 1e9,
                100.0 * c_error,
                100.0 * tolerance
            ),
        });
    }
    Ok(SizingReport {
        params,
        target_r_e: target_r,
        target_c_n: -target_c,
        emulated,
        r_error,
        c_error,
    })
}

impl fmt::Display for SizingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        let th = hysteresis_thresholds(p);
        let (fx, fy) = corner_frequencies(p);
        let rows: [(&str, String); 13] = [
            ("L_B", format!("{:.4} mH", p.l_b * 1e3)),
            ("R_m", format!("{:.4} ohm", p.r_m)),
            ("C_x", format!("{:.4} nF", p.c_x * 1e9)),
            ("R_x", format!("{:.4} kohm", p.r_x * 1e-3)),
            ("R_y", format!("{:.4} kohm", p.r_y * 1e-3)),
            ("R_f", format!("{:.4} kohm", p.r_f * 1e-3)),
            ("R_a", format!("{:.4} kohm", p.r_a * 1e-3)),
            ("R_b", format!("{:.4} kohm", p.r_b * 1e-3)),
            ("R_p", format!("{:.4} kohm", p.r_p * 1e-3)),
            ("R_q", format!("{:.4} Mohm", p.r_q * 1e-6)),
            ("V+", format!("{:.3} V", p.v_supply)),
            ("V_DC / V_n", format!("{:.3} V / {:.3} V", p.v_dc, p.v_n)),
            ("dead time", format!("{:.3} us", p.dead_time * 1e6)),
        ];
        writeln!(f, "{:<12} value", "component")?;
        for (name, value) in rows {
            writeln!(f, "{name:<12} {value}")?;
        }
        writeln!(f)?;
        writeln!(f, "R_a/R_b      {:.4}", p.r_a / p.r_b)?;
        writeln!(f, "delta V_T    {:.4} mV", th.delta_v_t * 1e3)?;
        writeln!(f, "f_x          {:.2} Hz", fx)?;
        writeln!(f, "f_y          {:.2} Hz", fy)?;
        writeln!(
            f,
            "R_e          {:.2} ohm (target {:.2}, {:.3}% off)",
            self.emulated.r_e,
            self.target_r_e,
            100.0 * self.r_error
        )?;
        write!(
            f,
            "C_n          {:.2} nF (target {:.2}, {:.3}% off)",
            self.emulated.c_n * 1e9,
            self.target_c_n * 1e9,
            100.0 * self.c_error
        )
    }
}
