use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::load::fmt_num;
use crate::ComplexValue;

use super::config::Fidelity;

/// Averages over one drive period. Phasors are referenced to the
/// acceleration, like everywhere else in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodStats {
    pub t_start: f64,
    pub t_end: f64,
    /// Acceleration amplitude at mid-period, g.
    pub amplitude: f64,
    /// Mechanical input power.
    pub p_source: f64,
    /// Dissipation in the mechanical damping.
    pub p_damping: f64,
    /// Power leaving the harvester terminals.
    pub p_load: f64,
    /// Power delivered to the DC rails (equal to `p_load` in behavioral runs).
    pub p_dc: f64,
    pub v_load: ComplexValue,
    pub i_load: ComplexValue,
    /// Energy stored in the harvester at the period edges, J.
    pub energy_start: f64,
    pub energy_end: f64,
}

impl PeriodStats {
    pub fn mid(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

/// Averages over several consecutive periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub t_start: f64,
    pub t_end: f64,
    pub periods: usize,
    pub omega: f64,
    pub p_source: f64,
    pub p_damping: f64,
    pub p_load: f64,
    pub p_dc: f64,
    /// Net rate of change of stored energy, W.
    pub energy_rate: f64,
    pub v_load: ComplexValue,
    pub i_load: ComplexValue,
}

impl WindowStats {
    /// Relative residual of `P_in = P_damping + P_load + dE/dt`.
    pub fn balance_error(&self) -> f64 {
        let r = self.p_source - self.p_damping - self.p_load - self.energy_rate;
        r.abs() / self.p_source.abs().max(f64::MIN_POSITIVE)
    }

    /// Phase of `v_load` minus phase of `i_load`, wrapped to (-pi, pi].
    /// Positive when the current lags.
    pub fn phase_lag(&self) -> f64 {
        wrap(self.v_load.arg() - self.i_load.arg())
    }

    /// `I_load / V_load`.
    pub fn admittance(&self) -> ComplexValue {
        self.i_load / self.v_load
    }

    /// Parallel resistance and capacitance seen by the harvester.
    pub fn parallel_rc(&self) -> (f64, f64) {
        let y = self.admittance();
        (1.0 / y.re, y.im / self.omega)
    }
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Base acceleration, g.
    pub accel: f64,
    pub v_load: f64,
    pub i_load: f64,
    pub p_dc: f64,
    /// Tip displacement, m.
    pub x: f64,
    pub x_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingStats {
    pub transitions: usize,
    /// Shortest time between two comparator transitions, s.
    pub min_interval: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub fidelity: Fidelity,
    pub drive_freq: f64,
    /// Step actually used, s.
    pub dt: f64,
    pub step_times: Vec<f64>,
    pub periods: Vec<PeriodStats>,
    pub traces: Vec<TraceRow>,
    pub warnings: Vec<String>,
    pub switching: Option<SwitchingStats>,
    pub window_periods: usize,
}

impl SimResult {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.drive_freq
    }

    /// Average of `n` periods ending at index `end` (exclusive).
    pub fn window(&self, end: usize, n: usize) -> Option<WindowStats> {
        if n == 0 || end > self.periods.len() || end < n {
            return None;
        }
        let ps = &self.periods[end - n..end];
        let k = n as f64;
        let sum = |f: fn(&PeriodStats) -> f64| ps.iter().map(f).sum::<f64>() / k;
        let first = ps[0];
        let last = ps[n - 1];
        Some(WindowStats {
            t_start: first.t_start,
            t_end: last.t_end,
            periods: n,
            omega: self.omega(),
            p_source: sum(|p| p.p_source),
            p_damping: sum(|p| p.p_damping),
            p_load: sum(|p| p.p_load),
            p_dc: sum(|p| p.p_dc),
            energy_rate: (last.energy_end - first.energy_start) / (last.t_end - first.t_start),
            v_load: ps.iter().map(|p| p.v_load).sum::<ComplexValue>() / k,
            i_load: ps.iter().map(|p| p.i_load).sum::<ComplexValue>() / k,
        })
    }

    /// Trailing window of `n` periods that ends no later than `t`.
    pub fn window_ending_at(&self, t: f64, n: usize) -> Option<WindowStats> {
        let end = self.periods.partition_point(|p| p.t_end <= t + 1e-9);
        self.window(end, n)
    }

    /// The trailing window at the end of the run.
    pub fn steady_state(&self) -> Option<WindowStats> {
        self.window(self.periods.len(), self.window_periods.min(self.periods.len()))
    }

    /// Steady-state power delivered to the DC side, W.
    pub fn avg_power(&self) -> f64 {
        self.steady_state().map_or(0.0, |w| w.p_dc)
    }

    pub fn phase_lag(&self) -> Option<f64> {
        self.steady_state().map(|w| w.phase_lag())
    }

    /// Time from the last amplitude step until the period-averaged DC power
    /// stays within `fraction` of its final value. The crossing is
    /// interpolated between period midpoints. `None` without a step.
    pub fn settle_time(&self, fraction: f64) -> Option<f64> {
        let t_step = *self.step_times.last()?;
        let n = self.periods.len();
        let final_value = self.window(n, self.window_periods.min(n))?.p_dc;
        let first = self.periods.partition_point(|p| p.t_end <= t_step);
        if first >= n {
            return None;
        }
        let band = fraction * final_value.abs();
        let err = |p: &PeriodStats| (p.p_dc - final_value).abs();
        // Last period after the step that is outside the band.
        let last_out = (first..n).rev().find(|&i| err(&self.periods[i]) > band);
        let t = match last_out {
            None => self.periods[first].t_start,
            Some(i) if i + 1 >= n => return None,
            Some(i) => {
                let (a, b) = (&self.periods[i], &self.periods[i + 1]);
                let (ea, eb) = (err(a), err(b));
                let s = if ea > eb { (ea - band) / (ea - eb) } else { 1.0 };
                a.mid() + s.clamp(0.0, 1.0) * (b.mid() - a.mid())
            }
        };
        Some((t - t_step).max(0.0))
    }

    pub fn traces_csv(&self) -> String {
        let mut s = String::from("t,accel,v_load,i_load,p_dc,x,x_dot\n");
        for r in &self.traces {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_num(r.t),
                fmt_num(r.accel),
                fmt_num(r.v_load),
                fmt_num(r.i_load),
                fmt_num(r.p_dc),
                fmt_num(r.x),
                fmt_num(r.x_dot)
            );
        }
        s
    }

    /// One header line and one data row.
    pub fn summary_csv(&self, settle_fraction: f64) -> String {
        let w = self.steady_state();
        let g = |f: fn(&WindowStats) -> f64| w.as_ref().map_or(String::new(), |w| fmt_num(f(w)));
        let settle = self.settle_time(settle_fraction).map_or(String::new(), fmt_num);
        let fidelity = match self.fidelity {
            Fidelity::Behavioral => "behavioral",
            Fidelity::Switched => "switched",
        };
        let mut s = String::from(
            "fidelity,drive_freq_hz,avg_power_w,p_load_w,p_source_w,v_load_amp,v_load_phase_rad,\
             i_load_amp,i_load_phase_rad,phase_lag_rad,energy_balance,settle_time_s\n",
        );
        let _ = writeln!(
            s,
            "{fidelity},{},{},{},{},{},{},{},{},{},{},{settle}",
            fmt_num(self.drive_freq),
            g(|w| w.p_dc),
            g(|w| w.p_load),
            g(|w| w.p_source),
            g(|w| w.v_load.norm()),
            g(|w| w.v_load.arg()),
            g(|w| w.i_load.norm()),
            g(|w| w.i_load.arg()),
            g(|w| w.phase_lag()),
            g(|w| w.balance_error()),
        );
        s
    }
}
