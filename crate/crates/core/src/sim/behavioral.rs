//! Harvester driving an ideal linear load or a sinusoidal voltage source.

use crate::error::{Error, Result};
use crate::harvester::{EquivalentCircuit, HarvesterParams};
use crate::interface::EmulatedLoad;
use crate::load::LoadSpec;

use super::config::{Fidelity, SimConfig};
use super::engine::{accumulate, rk4, Engine, Runner, Timing, ACC};
use super::profile::{AccelProfile, AmplitudeTable};
use super::result::{SimResult, TraceRow};

/// Anything the behavioral integrator can attach to the terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BehavioralLoad {
    Spec(LoadSpec),
    Emulated(EmulatedLoad),
}

impl From<LoadSpec> for BehavioralLoad {
    fn from(l: LoadSpec) -> Self {
        BehavioralLoad::Spec(l)
    }
}

impl From<EmulatedLoad> for BehavioralLoad {
    fn from(l: EmulatedLoad) -> Self {
        BehavioralLoad::Emulated(l)
    }
}

/// Time-domain realization of the load. `z` is the one extra state.
#[derive(Debug, Clone, Copy)]
enum Model {
    /// `g v` plus an inductor current `z`, with `L dz/dt = v`.
    Inductive {
        g: f64,
        l: f64,
    },
    /// `g v` plus a capacitor merged into the node.
    Capacitive {
        g: f64,
        c: f64,
    },
    /// `g v` plus `c (v - z) / tau` with `tau dz/dt = v - z`: a first-order
    /// filtered differentiator standing in for a negative capacitance.
    NegativeC {
        g: f64,
        c: f64,
        tau: f64,
    },
    Generator {
        v: f64,
        phi: f64,
    },
}

impl Model {
    fn new(load: BehavioralLoad, h: &HarvesterParams, omega: f64, tau: f64) -> Result<Self> {
        let m = match load {
            BehavioralLoad::Spec(spec) => {
                spec.validate()?;
                match spec {
                    LoadSpec::ParallelImpedance { r_load, x_load } if x_load > 0.0 => Model::Inductive {
                        g: 1.0 / r_load,
                        l: x_load / omega,
                    },
                    LoadSpec::ParallelImpedance { r_load, x_load } => Model::Capacitive {
                        g: 1.0 / r_load,
                        c: -1.0 / (omega * x_load),
                    },
                    LoadSpec::VoltageGenerator { v_load, phi_load } => Model::Generator {
                        v: v_load,
                        phi: phi_load,
                    },
                }
            }
            BehavioralLoad::Emulated(e) => {
                if !(e.r_e.is_finite() && e.r_e > 0.0) || !e.c_n.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "r_e",
                        value: e.r_e,
                        reason: "emulated load needs a positive resistance and finite capacitance",
                    });
                }
                if e.c_n >= 0.0 {
                    Model::Capacitive {
                        g: 1.0 / e.r_e,
                        c: e.c_n,
                    }
                } else {
                    // Scale the branch so its admittance at the drive frequency
                    // is exactly j w C_n, and move the residual real part into g.
                    let wt = omega * tau;
                    let c = e.c_n * (1.0 + wt * wt);
                    let g = 1.0 / e.r_e - e.c_n * omega * wt;
                    // Characteristic polynomial of the node: C_p tau s^2 +
                    // (C_p + c + g tau) s + g. Both coefficients must be positive.
                    let damping = h.c_p + c + g * tau;
                    if damping <= 0.0 {
                        return Err(Error::Config(format!(
                            "negative capacitance {:.4e} F overcompensates C_p = {:.4e} F; \
                             the terminal node would be unstable",
                            e.c_n, h.c_p
                        )));
                    }
                    Model::NegativeC { g, c, tau }
                }
            }
        };
        Ok(m)
    }
}

const Q: usize = 0;
const IS: usize = 1;
const V: usize = 2;
const Z: usize = 3;
const A0: usize = 4;
const N: usize = A0 + ACC;

pub(crate) struct BehavioralEngine<'a> {
    delta: f64,
    c_p: f64,
    eq: EquivalentCircuit,
    alpha: f64,
    omega: f64,
    dt: f64,
    table: &'a AmplitudeTable,
    model: Model,
    y: [f64; N],
}

struct Aux {
    v: f64,
    i_load: f64,
}

impl<'a> BehavioralEngine<'a> {
    pub(crate) fn new(
        h: &HarvesterParams,
        load: BehavioralLoad,
        timing: &Timing,
        table: &'a AmplitudeTable,
        cfg: &SimConfig,
    ) -> Result<Self> {
        h.validate()?;
        Ok(Self {
            delta: h.delta,
            c_p: h.c_p,
            eq: h.equivalent_circuit(),
            alpha: h.mechanical().alpha,
            omega: timing.omega,
            dt: timing.dt,
            table,
            model: Model::new(load, h, timing.omega, cfg.neg_cap_tau)?,
            y: [0.0; N],
        })
    }

    /// Retunes a generator load; other loads are left alone.
    pub(crate) fn set_generator(&mut self, v: f64, phi: f64) {
        if let Model::Generator { .. } = self.model {
            self.model = Model::Generator { v, phi };
        }
    }

    fn eval(&self, t: f64, y: &[f64; N]) -> ([f64; N], Aux) {
        let (s, c) = (self.omega * t).sin_cos();
        let v_s = self.delta * self.table.at(t) * s;
        let (q, i_s) = (y[Q], y[IS]);
        let mut d = [0.0; N];
        let (v, i_load) = match self.model {
            Model::Generator { v: vg, phi } => {
                let (sp, cp) = (self.omega * t + phi).sin_cos();
                let v = vg * sp;
                (v, i_s - self.c_p * vg * self.omega * cp)
            }
            Model::Inductive { g, l } => {
                let v = y[V];
                let i = g * v + y[Z];
                d[Z] = v / l;
                d[V] = (i_s - i) / self.c_p;
                (v, i)
            }
            Model::Capacitive { g, c } => {
                let v = y[V];
                d[V] = (i_s - g * v) / (self.c_p + c);
                (v, g * v + c * d[V])
            }
            Model::NegativeC { g, c, tau } => {
                let v = y[V];
                let i = g * v + c * (v - y[Z]) / tau;
                d[Z] = (v - y[Z]) / tau;
                d[V] = (i_s - i) / self.c_p;
                (v, i)
            }
        };
        d[Q] = i_s;
        d[IS] = (v_s - self.eq.r_d * i_s - q / self.eq.c_k - v) / self.eq.l_m;
        let p_load = v * i_load;
        accumulate(
            &mut d,
            A0,
            v_s * i_s,
            self.eq.r_d * i_s * i_s,
            v,
            i_load,
            p_load,
            s,
            c,
        );
        (d, Aux { v, i_load })
    }

    fn terminal_voltage(&self, t: f64) -> f64 {
        match self.model {
            Model::Generator { v, phi } => v * (self.omega * t + phi).sin(),
            _ => self.y[V],
        }
    }
}

impl Engine for BehavioralEngine<'_> {
    fn step(&mut self, n: u64) -> Result<()> {
        let t = n as f64 * self.dt;
        self.y = rk4(&self.y, t, self.dt, |t, y| self.eval(t, y).0);
        if let Model::Generator { .. } = self.model {
            // Keep the unused state consistent for energy bookkeeping.
            self.y[V] = self.terminal_voltage(t + self.dt);
        }
        Ok(())
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
        let (_, aux) = self.eval(t, &self.y);
        TraceRow {
            t,
            accel: self.table.at(t) * (self.omega * t).sin(),
            v_load: aux.v,
            i_load: aux.i_load,
            p_dc: aux.v * aux.i_load,
            x: self.y[Q] / self.alpha,
            x_dot: self.y[IS] / self.alpha,
        }
    }

    fn state_is_finite(&self) -> bool {
        self.y.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn prepare(
    h: &HarvesterParams,
    profile: &AccelProfile,
    cfg: &SimConfig,
) -> Result<(HarvesterParams, Timing, usize)> {
    profile.validate()?;
    cfg.validate()?;
    let mut h = *h;
    if let Some(q) = cfg.q_factor_override {
        h.q_factor = q;
    }
    h.validate()?;
    let timing = Timing::new(profile.drive_freq, cfg.dt);
    let periods = timing.periods_for(cfg.t_end.unwrap_or_else(|| profile.duration()));
    Ok((h, timing, periods))
}

/// Integrates the harvester with an ideal load under `profile`.
pub fn simulate_behavioral(
    h: &HarvesterParams,
    load: impl Into<BehavioralLoad>,
    profile: &AccelProfile,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let (h, timing, periods) = prepare(h, profile, cfg)?;
    let table = AmplitudeTable::new(profile);
    let mut engine = BehavioralEngine::new(&h, load.into(), &timing, &table, cfg)?;
    let mut runner = Runner::new(timing, &table, cfg.record_decimation);
    for _ in 0..periods {
        runner.run_period(&mut engine)?;
    }
    Ok(SimResult {
        fidelity: Fidelity::Behavioral,
        drive_freq: profile.drive_freq,
        dt: timing.dt,
        step_times: profile.step_times(),
        periods: runner.periods,
        traces: runner.traces,
        warnings: Vec::new(),
        switching: None,
        window_periods: cfg.window_periods,
    })
}

/// Behavioral run with a voltage generator frozen at `(v_fixed, phi_fixed)`.
pub fn run_fixed_generator(
    h: &HarvesterParams,
    v_fixed: f64,
    phi_fixed: f64,
    profile: &AccelProfile,
    cfg: &SimConfig,
) -> Result<SimResult> {
    simulate_behavioral(
        h,
        LoadSpec::VoltageGenerator {
            v_load: v_fixed,
            phi_load: phi_fixed,
        },
        profile,
        cfg,
    )
}
