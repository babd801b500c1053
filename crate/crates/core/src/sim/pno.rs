//! Two-variable perturb-and-observe tracking of a voltage-generator load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::HarvesterParams;
use crate::load::LoadSpec;

use super::behavioral::{prepare, BehavioralEngine};
use super::config::{Fidelity, SimConfig};
use super::engine::Runner;
use super::profile::{AccelProfile, AmplitudeTable};
use super::result::SimResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnoConfig {
    pub start_v: f64,
    pub start_phi: f64,
    /// Amplitude perturbation, V.
    pub step_v: f64,
    /// Phase perturbation, rad.
    pub step_phi: f64,
    /// Drive periods spent at each operating point.
    pub dwell_periods: usize,
    /// Trailing periods of each dwell over which power is averaged.
    pub measure_periods: usize,
}

impl Default for PnoConfig {
    fn default() -> Self {
        Self {
            start_v: 2.0,
            start_phi: 0.0,
            step_v: 0.1,
            step_phi: 0.05,
            dwell_periods: 24,
            measure_periods: 4,
        }
    }
}

/// One investigated operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnoPoint {
    /// End of the dwell, s.
    pub t: f64,
    pub v_load: f64,
    pub phi_load: f64,
    /// Power measured at the end of the dwell, W.
    pub power: f64,
}

#[derive(Debug, Clone)]
pub struct PnoResult {
    pub sim: SimResult,
    pub trajectory: Vec<PnoPoint>,
    /// Dwell shorter than three mechanical time constants: decisions are
    /// taken before the transient has died out.
    pub unreliable: bool,
    /// Both perturbation sizes are zero, so the tracker never moves.
    pub degenerate: bool,
}

impl PnoResult {
    pub fn final_point(&self) -> Option<PnoPoint> {
        self.trajectory.last().copied()
    }
}

/// Hill-climbs `(V_load, Phi_load)` by alternating single-axis
/// perturbations. An axis reverses direction whenever its last
/// perturbation lowered the measured power.
pub fn run_pno_2d(
    h: &HarvesterParams,
    profile: &AccelProfile,
    pno: &PnoConfig,
    cfg: &SimConfig,
) -> Result<PnoResult> {
    if pno.dwell_periods == 0 || pno.measure_periods == 0 || pno.measure_periods > pno.dwell_periods {
        return Err(Error::Config(
            "P&O needs 0 < measure_periods <= dwell_periods".into(),
        ));
    }
    for (name, v) in [("step_v", pno.step_v), ("step_phi", pno.step_phi)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
        }
    }
    let (h, timing, periods) = prepare(h, profile, cfg)?;
    let table = AmplitudeTable::new(profile);
    let load = LoadSpec::VoltageGenerator {
        v_load: pno.start_v,
        phi_load: pno.start_phi,
    };
    let mut engine = BehavioralEngine::new(&h, load.into(), &timing, &table, cfg)?;
    let mut runner = Runner::new(timing, &table, cfg.record_decimation);

    let tau_mech = 2.0 * h.q_factor / h.omega_res();
    let dwell = pno.dwell_periods as f64 * timing.period;
    let unreliable = dwell < 3.0 * tau_mech;
    let degenerate = pno.step_v == 0.0 && pno.step_phi == 0.0;
    let steps = [pno.step_v, pno.step_phi];

    let (mut v, mut phi) = (pno.start_v, pno.start_phi);
    let mut dir = [1.0f64, 1.0];
    let mut axis = 0usize;
    let mut last_axis: Option<usize> = None;
    let mut prev_power: Option<f64> = None;
    let mut trajectory = Vec::new();
    let mut done = 0;
    while done < periods {
        let n = pno.dwell_periods.min(periods - done);
        let mut powers = Vec::with_capacity(n);
        for _ in 0..n {
            powers.push(runner.run_period(&mut engine)?.p_dc);
        }
        done += n;
        let m = pno.measure_periods.min(n);
        let power = powers[n - m..].iter().sum::<f64>() / m as f64;
        trajectory.push(PnoPoint {
            t: runner.t(),
            v_load: v,
            phi_load: phi,
            power,
        });
        if degenerate {
            continue;
        }
        if let (Some(a), Some(p0)) = (last_axis, prev_power) {
            if power < p0 {
                dir[a] = -dir[a];
            }
        }
        prev_power = Some(power);
        // Skip an axis whose step is zero.
        if steps[axis] == 0.0 {
            axis = 1 - axis;
        }
        match axis {
            0 => v = (v + dir[0] * pno.step_v).max(0.0),
            _ => phi += dir[1] * pno.step_phi,
        }
        engine.set_generator(v, phi);
        last_axis = Some(axis);
        axis = 1 - axis;
    }

    let mut warnings = Vec::new();
    if unreliable {
        warnings.push(format!(
            "P&O dwell {dwell:.4} s is shorter than three mechanical time constants ({:.4} s)",
            3.0 * tau_mech
        ));
    }
    if degenerate {
        warnings.push("P&O perturbation sizes are zero; the operating point never moves".into());
    }
    Ok(PnoResult {
        sim: SimResult {
            fidelity: Fidelity::Behavioral,
            drive_freq: profile.drive_freq,
            dt: timing.dt,
            step_times: profile.step_times(),
            periods: runner.periods,
            traces: runner.traces,
            warnings,
            switching: None,
            window_periods: cfg.window_periods,
        },
        trajectory,
        unreliable,
        degenerate,
    })
}
