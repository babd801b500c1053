//! Browser bindings for the demo page in `www/`.
//!
//! Each export wraps a plain function so the numbers can be checked
//! natively without a JS runtime.

use harvest_core::load::{grid_sweep, Axis, SweepSpec};
use harvest_core::sim::{run_pno_2d, simulate_behavioral, AccelProfile, PnoConfig, SimConfig, SimResult};
use harvest_core::{HarvesterParams, LoadSpec};
use wasm_bindgen::prelude::*;

/// Time of the amplitude step in [`step_response`], s.
pub const STEP_AT: f64 = 0.2;

/// Normalized power over a log grid of `R/R_opt` and `X/X_opt` in
/// `[0.1, 10]`, row-major with `R` varying slowest.
pub fn impedance_map(rho: f64, points: usize) -> Result<Vec<f64>, String> {
    let axis = Axis::log(0.1, 10.0, points);
    let d = grid_sweep(&SweepSpec::Impedance {
        rho,
        r_n: axis,
        x_n: axis,
    })
    .map_err(|e| e.to_string())?;
    Ok(d.values)
}

/// Five numbers per ratio: the ratio, `P_max/P_max0`, the fixed-impedance
/// and fixed-generator powers over `P_max0`, and wasted power in percent.
pub fn waste_curves(from: f64, to: f64, points: usize) -> Result<Vec<f64>, String> {
    let d = grid_sweep(&SweepSpec::Ratio {
        ratio: Axis::linear(from, to, points),
    })
    .map_err(|e| e.to_string())?;
    let width = d.axis2.len();
    Ok(d.axis1
        .iter()
        .enumerate()
        .flat_map(|(i, &r)| std::iter::once(r).chain(d.values[i * width..(i + 1) * width].iter().copied()))
        .collect())
}

/// Per-period load power after an amplitude step, for a fixed emulated
/// optimum or for the P&O tracker.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct StepTrace {
    times: Vec<f64>,
    power: Vec<f64>,
    settle: f64,
}

#[wasm_bindgen]
impl StepTrace {
    /// Period midpoints, s.
    #[wasm_bindgen(getter)]
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// Average load power per period, W.
    #[wasm_bindgen(getter)]
    pub fn power(&self) -> Vec<f64> {
        self.power.clone()
    }

    /// Time to stay within 5 % of the final power, s. NaN if unknown.
    #[wasm_bindgen(getter)]
    pub fn settle(&self) -> f64 {
        self.settle
    }
}

impl From<SimResult> for StepTrace {
    fn from(r: SimResult) -> Self {
        Self {
            times: r.periods.iter().map(|p| p.mid()).collect(),
            power: r.periods.iter().map(|p| p.p_load).collect(),
            settle: r.settle_time(0.05).unwrap_or(f64::NAN),
        }
    }
}

/// Behavioral run of the PPA-4011 harvester with quality factor `q`, driven
/// at resonance. The amplitude steps from `a0` to `a1` g at [`STEP_AT`].
pub fn step_response(a0: f64, a1: f64, q: f64, tracker: bool) -> Result<StepTrace, String> {
    let h = HarvesterParams {
        q_factor: q,
        ..HarvesterParams::ppa4011()
    };
    h.validate().map_err(|e| e.to_string())?;
    let duration = if tracker { 4.0 } else { 1.0 };
    let profile = AccelProfile::step(h.f_res, a0, a1, STEP_AT, duration);
    let cfg = SimConfig {
        record_decimation: 0,
        ..SimConfig::behavioral()
    };
    let r = if tracker {
        // Start from the optimum for `a0`, as a converged tracker would.
        let pno = PnoConfig {
            start_v: h.delta * a0 / 2.0,
            ..PnoConfig::default()
        };
        run_pno_2d(&h, &profile, &pno, &cfg).map(|r| r.sim)
    } else {
        simulate_behavioral(&h, LoadSpec::matched(&h), &profile, &cfg)
    };
    r.map(StepTrace::from).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = impedanceMap)]
pub fn impedance_map_js(rho: f64, points: usize) -> Result<Vec<f64>, JsError> {
    impedance_map(rho, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = wasteCurves)]
pub fn waste_curves_js(from: f64, to: f64, points: usize) -> Result<Vec<f64>, JsError> {
    waste_curves(from, to, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stepResponse)]
pub fn step_response_js(a0: f64, a1: f64, q: f64, tracker: bool) -> Result<StepTrace, JsError> {
    step_response(a0, a1, q, tracker).map_err(|e| JsError::new(&e))
}
