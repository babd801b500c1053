use crate::error::{Error, Result};
use crate::harvester::HarvesterParams;
use crate::interface::EmulatedLoad;

use super::behavioral::simulate_behavioral;
use super::config::SimConfig;
use super::profile::AccelProfile;

/// Step instant of the calibration scenario, s.
pub const CALIBRATION_STEP_TIME: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QCalibration {
    pub q_factor: f64,
    pub settle_time: f64,
    pub iterations: usize,
}

/// Settle time of a matched load after a 0 -> 1 g step, for quality factor `q`.
pub fn matched_step_settle(
    h: &HarvesterParams,
    q: f64,
    fraction: f64,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<f64> {
    let mut h = *h;
    h.q_factor = q;
    let profile = AccelProfile::step(
        h.f_res,
        0.0,
        1.0,
        CALIBRATION_STEP_TIME,
        CALIBRATION_STEP_TIME + horizon,
    );
    let cfg = SimConfig {
        record_decimation: 0,
        t_end: None,
        q_factor_override: None,
        ..*cfg
    };
    let r = simulate_behavioral(&h, EmulatedLoad::matched(&h), &profile, &cfg)?;
    r.settle_time(fraction)
        .ok_or_else(|| Error::Config("calibration run did not settle".into()))
}

/// Bisects the quality factor in `[q_lo, q_hi]` until a matched load
/// settles in `target` seconds after a 0 -> 1 g step. Settle time grows
/// monotonically with Q.
pub fn calibrate_q(
    h: &HarvesterParams,
    target: f64,
    fraction: f64,
    (q_lo, q_hi): (f64, f64),
    cfg: &SimConfig,
) -> Result<QCalibration> {
    if !(target > 0.0 && q_lo > 0.0 && q_hi > q_lo) {
        return Err(Error::Config(
            "calibration needs target > 0 and 0 < q_lo < q_hi".into(),
        ));
    }
    let horizon = 6.0 * target;
    let settle = |q| matched_step_settle(h, q, fraction, horizon, cfg);
    let (s_lo, s_hi) = (settle(q_lo)?, settle(q_hi)?);
    if !(s_lo <= target && target <= s_hi) {
        return Err(Error::Config(format!(
            "settle target {target} s not bracketed: {s_lo:.4} s at Q = {q_lo}, {s_hi:.4} s at Q = {q_hi}"
        )));
    }
    let (mut lo, mut hi) = (q_lo, q_hi);
    let mut iterations = 0;
    while hi - lo > 1e-3 * lo && iterations < 60 {
        let mid = 0.5 * (lo + hi);
        if settle(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let q_factor = 0.5 * (lo + hi);
    Ok(QCalibration {
        q_factor,
        settle_time: settle(q_factor)?,
        iterations,
    })
}
