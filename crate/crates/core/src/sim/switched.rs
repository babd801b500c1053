//! Harvester loaded by the hysteretic impedance-emulation converter.
//!
//! The inductor current `i_L` is the load current. A synchronous leg ties
//! the far end of the inductor to `+V_DC` or `-V_n`; during dead time both
//! switches are open and the freewheeling diodes conduct according to the
//! sign of `i_L`.
//!
//! In approximate conditioning the `C_x` derivative is band-limited by two
//! poles at the configured corner. An ideal derivative of `v_load` carries
//! the inductor ripple straight into `v_e` with a gain `R_f C_x / C_p`
//! that nearly cancels the sense gain `R_f R_m / R_y`, which leaves the
//! comparator loop without a usable current feedback.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::harvester::{EquivalentCircuit, HarvesterParams};
use crate::interface::{hysteresis_thresholds, ConditioningMode, ControllerParams};

use super::behavioral::prepare;
use super::config::{Fidelity, SimConfig};
use super::engine::{accumulate, rk4, Engine, Runner, Timing, ACC};
use super::profile::{AccelProfile, AmplitudeTable};
use super::result::{SimResult, SwitchingStats, TraceRow};

const Q: usize = 0;
const IS: usize = 1;
const V: usize = 2;
const IL: usize = 3;
/// Voltage across the conditioning capacitor.
const U: usize = 4;
/// Low-passed conditioning current (second pole of the differentiator).
const F: usize = 5;
const A0: usize = 6;
const N: usize = A0 + ACC;

/// Sub-steps allowed within one step before the run is declared stuck.
const MAX_SUBSTEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rail {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Leg {
    On(Rail),
    /// Both switches open until the given time.
    Dead(f64),
}

/// What the inductor's far end is tied to during one sub-step.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Drive {
    /// Fixed voltage; `rail` is the rail potential used for `p_DC`.
    Fixed { v_sw: f64, rail: f64 },
    /// Diodes blocking: the current is held at zero.
    Open,
}

pub(crate) struct SwitchedEngine<'a> {
    delta: f64,
    c_p: f64,
    eq: EquivalentCircuit,
    alpha: f64,
    omega: f64,
    dt: f64,
    table: &'a AmplitudeTable,
    cp: ControllerParams,
    mode: ConditioningMode,
    /// Series resistance of the conditioning branch.
    r_x: f64,
    k: f64,
    /// Time constant of the second differentiator pole; zero in exact mode.
    tau_f: f64,
    v_th: f64,
    v_tl: f64,
    cmd: Rail,
    leg: Leg,
    y: [f64; N],
    t: f64,
    last_flip: Option<f64>,
    transitions: usize,
    min_interval: f64,
}

impl<'a> SwitchedEngine<'a> {
    pub(crate) fn new(
        h: &HarvesterParams,
        cp: &ControllerParams,
        timing: &Timing,
        table: &'a AmplitudeTable,
        cfg: &SimConfig,
    ) -> Result<Self> {
        cp.validate()?;
        if cp.dead_time > 0.0 && cp.dead_time < timing.dt {
            return Err(Error::Config(format!(
                "dead time {:.3e} s is shorter than the step {:.3e} s",
                cp.dead_time, timing.dt
            )));
        }
        let r_x = match cfg.conditioning {
            ConditioningMode::Exact => cp.r_x,
            ConditioningMode::Approximate => 1.0 / (2.0 * PI * cfg.differentiator_corner * cp.c_x),
        };
        let th = hysteresis_thresholds(cp);
        Ok(Self {
            delta: h.delta,
            c_p: h.c_p,
            eq: h.equivalent_circuit(),
            alpha: h.mechanical().alpha,
            omega: timing.omega,
            dt: timing.dt,
            table,
            cp: *cp,
            mode: cfg.conditioning,
            r_x,
            k: cp.divider(),
            tau_f: match cfg.conditioning {
                ConditioningMode::Exact => 0.0,
                ConditioningMode::Approximate => 1.0 / (2.0 * PI * cfg.differentiator_corner),
            },
            v_th: th.v_th,
            v_tl: th.v_tl,
            cmd: Rail::High,
            leg: Leg::On(Rail::High),
            y: [0.0; N],
            t: 0.0,
            last_flip: None,
            transitions: 0,
            min_interval: f64::INFINITY,
        })
    }

    /// Current into the conditioning capacitor branch.
    #[inline]
    fn i_x(&self, y: &[f64; N]) -> f64 {
        match self.mode {
            ConditioningMode::Exact => ((1.0 - self.k) * y[V] - y[U]) / self.r_x,
            ConditioningMode::Approximate => (y[V] - y[U]) / self.r_x,
        }
    }

    /// Output of the conditioning stage.
    #[inline]
    fn v_e(&self, y: &[f64; N]) -> f64 {
        let cp = &self.cp;
        let vn = self.k * y[V];
        let i_x = if self.tau_f > 0.0 { y[F] } else { self.i_x(y) };
        match self.mode {
            ConditioningMode::Exact => vn - cp.r_f * ((cp.r_m * y[IL] - vn) / cp.r_y + i_x),
            ConditioningMode::Approximate => {
                -cp.sense_gain() * y[IL] - cp.r_f * i_x + self.k * (1.0 + cp.r_f / cp.r_y) * y[V]
            }
        }
    }

    fn drive(&self, y: &[f64; N]) -> Drive {
        let cp = &self.cp;
        match self.leg {
            Leg::On(Rail::High) => Drive::Fixed {
                v_sw: cp.v_dc,
                rail: cp.v_dc,
            },
            Leg::On(Rail::Low) => Drive::Fixed {
                v_sw: -cp.v_n,
                rail: -cp.v_n,
            },
            Leg::Dead(_) => {
                let i = y[IL];
                let v = y[V];
                if i > 0.0 || (i == 0.0 && v > cp.v_dc + cp.diode_drop) {
                    Drive::Fixed {
                        v_sw: cp.v_dc + cp.diode_drop,
                        rail: cp.v_dc,
                    }
                } else if i < 0.0 || v < -cp.v_n - cp.diode_drop {
                    Drive::Fixed {
                        v_sw: -cp.v_n - cp.diode_drop,
                        rail: -cp.v_n,
                    }
                } else {
                    Drive::Open
                }
            }
        }
    }

    fn eval(&self, t: f64, y: &[f64; N], drive: Drive) -> [f64; N] {
        let (s, c) = (self.omega * t).sin_cos();
        let v_s = self.delta * self.table.at(t) * s;
        let (q, i_s, v, i_l) = (y[Q], y[IS], y[V], y[IL]);
        let mut d = [0.0; N];
        d[Q] = i_s;
        d[IS] = (v_s - self.eq.r_d * i_s - q / self.eq.c_k - v) / self.eq.l_m;
        d[V] = (i_s - i_l) / self.c_p;
        let p_dc = match drive {
            Drive::Fixed { v_sw, rail } => {
                d[IL] = (v - self.cp.r_m * i_l - v_sw) / self.cp.l_b;
                rail * i_l
            }
            Drive::Open => 0.0,
        };
        let i_x = self.i_x(y);
        d[U] = i_x / self.cp.c_x;
        if self.tau_f > 0.0 {
            d[F] = (i_x - y[F]) / self.tau_f;
        }
        accumulate(&mut d, A0, v_s * i_s, self.eq.r_d * i_s * i_s, v, i_l, p_dc, s, c);
        d
    }

    fn advance(&self, h: f64) -> [f64; N] {
        let drive = self.drive(&self.y);
        let mut y = rk4(&self.y, self.t, h, |t, y| self.eval(t, y, drive));
        if let Leg::Dead(_) = self.leg {
            // A diode stops conducting when its current reaches zero.
            let before = self.y[IL];
            if drive == Drive::Open || before * y[IL] < 0.0 {
                y[IL] = 0.0;
            }
        }
        y
    }

    /// Comparator: `v_e` above the band asks for more current (low rail),
    /// below the band for less (high rail).
    fn wants_flip(&self, v_e: f64) -> bool {
        match self.cmd {
            Rail::Low => v_e <= self.v_tl,
            Rail::High => v_e >= self.v_th,
        }
    }

    fn threshold(&self) -> f64 {
        match self.cmd {
            Rail::Low => self.v_tl,
            Rail::High => self.v_th,
        }
    }

    fn flip(&mut self) {
        self.cmd = match self.cmd {
            Rail::Low => Rail::High,
            Rail::High => Rail::Low,
        };
        self.leg = if self.cp.dead_time > 0.0 {
            Leg::Dead(self.t + self.cp.dead_time)
        } else {
            Leg::On(self.cmd)
        };
        if let Some(prev) = self.last_flip {
            self.min_interval = self.min_interval.min(self.t - prev);
        }
        self.last_flip = Some(self.t);
        self.transitions += 1;
    }

    pub(crate) fn switching(&self) -> SwitchingStats {
        SwitchingStats {
            transitions: self.transitions,
            min_interval: self.min_interval,
        }
    }
}

impl Engine for SwitchedEngine<'_> {
    fn step(&mut self, n: u64) -> Result<()> {
        let t_end = (n + 1) as f64 * self.dt;
        self.t = n as f64 * self.dt;
        let tiny = self.dt * 1e-9;
        for _ in 0..MAX_SUBSTEPS {
            let remaining = t_end - self.t;
            if remaining <= tiny {
                self.t = t_end;
                return Ok(());
            }
            let v_e0 = self.v_e(&self.y);
            if self.wants_flip(v_e0) {
                self.flip();
                continue;
            }
            let mut h = remaining;
            if let Leg::Dead(until) = self.leg {
                if until - self.t <= tiny {
                    self.leg = Leg::On(self.cmd);
                    continue;
                }
                h = h.min(until - self.t);
            }
            let y1 = self.advance(h);
            let v_e1 = self.v_e(&y1);
            if self.wants_flip(v_e1) {
                // Linear interpolation of the crossing inside the step.
                let thr = self.threshold();
                let theta = ((thr - v_e0) / (v_e1 - v_e0)).clamp(0.0, 1.0);
                let hc = theta * h;
                if hc > tiny {
                    self.y = self.advance(hc);
                    self.t += hc;
                }
                self.flip();
                continue;
            }
            self.y = y1;
            self.t += h;
            if let Leg::Dead(until) = self.leg {
                if self.t >= until - tiny {
                    self.leg = Leg::On(self.cmd);
                }
            }
        }
        Err(Error::Integration { t: self.t })
    }

    fn take_accumulators(&mut self) -> [f64; ACC] {
        let mut a = [0.0; ACC];
        a.copy_from_slice(&self.y[A0..]);
        self.y[A0..].fill(0.0);
        a
    }

    fn energy(&self) -> f64 {
        let (q, i, v) = (self.y[Q], self.y[IS], self.y[V]);
        0.5 * (self.eq.l_m * i * i + q * q / self.eq.c_k + self.c_p * v * v)
    }

    fn sample(&self, t: f64) -> TraceRow {
        let v = self.y[V];
        let i = self.y[IL];
        let rail = match self.drive(&self.y) {
            Drive::Fixed { rail, .. } => rail,
            Drive::Open => 0.0,
        };
        TraceRow {
            t,
            accel: self.table.at(t) * (self.omega * t).sin(),
            v_load: v,
            i_load: i,
            p_dc: rail * i,
            x: self.y[Q] / self.alpha,
            x_dot: self.y[IS] / self.alpha,
        }
    }

    fn state_is_finite(&self) -> bool {
        self.y.iter().all(|v| v.is_finite())
    }
}

/// Integrates the harvester loaded by the switched converter under `profile`.
pub fn simulate_switched(
    h: &HarvesterParams,
    cp: &ControllerParams,
    profile: &AccelProfile,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let (h, timing, periods) = prepare(h, profile, cfg)?;
    let table = AmplitudeTable::new(profile);
    let mut engine = SwitchedEngine::new(&h, cp, &timing, &table, cfg)?;
    let mut runner = Runner::new(timing, &table, cfg.record_decimation);
    for _ in 0..periods {
        runner.run_period(&mut engine)?;
    }
    let switching = engine.switching();
    let mut warnings = Vec::new();
    if switching.transitions > 1 && switching.min_interval < 20.0 * timing.dt {
        warnings.push(format!(
            "shortest switching interval {:.3e} s holds fewer than 20 steps of {:.3e} s",
            switching.min_interval, timing.dt
        ));
    }
    Ok(SimResult {
        fidelity: Fidelity::Switched,
        drive_freq: profile.drive_freq,
        dt: timing.dt,
        step_times: profile.step_times(),
        periods: runner.periods,
        traces: runner.traces,
        warnings,
        switching: Some(switching),
        window_periods: cfg.window_periods,
    })
}
