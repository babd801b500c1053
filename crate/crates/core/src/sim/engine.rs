//! Pieces shared by the behavioral and switched integrators.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ComplexValue;

use super::profile::AmplitudeTable;
use super::result::{PeriodStats, TraceRow};

/// Running integrals carried as extra ODE states so they get the same
/// order of accuracy as the dynamics: input, damping, load and DC power,
/// then `v sin`, `v cos`, `i sin`, `i cos` for demodulation.
pub(crate) const ACC: usize = 8;

pub(crate) fn rk4<const N: usize>(
    y: &[f64; N],
    t: f64,
    h: f64,
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// Fills the accumulator derivatives at offset `o`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate(
    d: &mut [f64],
    o: usize,
    p_in: f64,
    p_damp: f64,
    v: f64,
    i: f64,
    p_dc: f64,
    sin: f64,
    cos: f64,
) {
    d[o] = p_in;
    d[o + 1] = p_damp;
    d[o + 2] = v * i;
    d[o + 3] = p_dc;
    d[o + 4] = v * sin;
    d[o + 5] = v * cos;
    d[o + 6] = i * sin;
    d[o + 7] = i * cos;
}

/// Step size snapped to a whole number of steps per drive period.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Timing {
    pub dt: f64,
    pub steps_per_period: usize,
    pub period: f64,
    pub omega: f64,
}

impl Timing {
    pub(crate) fn new(drive_freq: f64, dt: f64) -> Self {
        let period = 1.0 / drive_freq;
        let steps_per_period = ((period / dt).ceil() as usize).max(4);
        Self {
            dt: period / steps_per_period as f64,
            steps_per_period,
            period,
            omega: 2.0 * PI * drive_freq,
        }
    }

    /// Whole periods needed to cover `t_end`.
    pub(crate) fn periods_for(&self, t_end: f64) -> usize {
        ((t_end / self.period) - 1e-9).ceil().max(1.0) as usize
    }
}

pub(crate) trait Engine {
    /// Advances by one step. `n` is the index of the step being taken, so
    /// the engine ends at `(n + 1) dt`.
    fn step(&mut self, n: u64) -> Result<()>;
    /// Returns the accumulators and zeroes them.
    fn take_accumulators(&mut self) -> [f64; ACC];
    /// Energy stored in the harvester, J.
    fn energy(&self) -> f64;
    fn sample(&self, t: f64) -> TraceRow;
    fn state_is_finite(&self) -> bool;
}

/// Drives an engine period by period and collects statistics.
pub(crate) struct Runner<'a> {
    pub timing: Timing,
    pub table: &'a AmplitudeTable,
    pub decimation: usize,
    pub step: u64,
    pub periods: Vec<PeriodStats>,
    pub traces: Vec<TraceRow>,
}

impl<'a> Runner<'a> {
    pub(crate) fn new(timing: Timing, table: &'a AmplitudeTable, decimation: usize) -> Self {
        Self {
            timing,
            table,
            decimation,
            step: 0,
            periods: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub(crate) fn t(&self) -> f64 {
        self.step as f64 * self.timing.dt
    }

    pub(crate) fn run_period<E: Engine>(&mut self, e: &mut E) -> Result<PeriodStats> {
        let t_start = self.t();
        let energy_start = e.energy();
        e.take_accumulators();
        for _ in 0..self.timing.steps_per_period {
            if self.decimation > 0 && self.step.is_multiple_of(self.decimation as u64) {
                self.traces.push(e.sample(self.t()));
            }
            e.step(self.step)?;
            self.step += 1;
            if !e.state_is_finite() {
                return Err(Error::Integration { t: self.t() });
            }
        }
        let t_end = self.t();
        let acc = e.take_accumulators();
        let tp = t_end - t_start;
        let stats = PeriodStats {
            t_start,
            t_end,
            amplitude: self.table.at(0.5 * (t_start + t_end)),
            p_source: acc[0] / tp,
            p_damping: acc[1] / tp,
            p_load: acc[2] / tp,
            p_dc: acc[3] / tp,
            v_load: ComplexValue::new(acc[4], acc[5]) * (2.0 / tp),
            i_load: ComplexValue::new(acc[6], acc[7]) * (2.0 / tp),
            energy_start,
            energy_end: e.energy(),
        };
        self.periods.push(stats);
        Ok(stats)
    }
}
