use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Seconds.
    pub duration: f64,
    /// Acceleration amplitude, g.
    pub amplitude: f64,
}

/// Piecewise-constant acceleration amplitude at a fixed drive frequency.
/// The base acceleration is `A(t) sin(2 pi f t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelProfile {
    pub drive_freq: f64,
    pub segments: Vec<Segment>,
}

impl AccelProfile {
    pub fn constant(drive_freq: f64, amplitude: f64, duration: f64) -> Self {
        Self {
            drive_freq,
            segments: vec![Segment { duration, amplitude }],
        }
    }

    /// `a0` until `t_step`, then `a1` until `t_end`.
    pub fn step(drive_freq: f64, a0: f64, a1: f64, t_step: f64, t_end: f64) -> Self {
        Self {
            drive_freq,
            segments: vec![
                Segment {
                    duration: t_step,
                    amplitude: a0,
                },
                Segment {
                    duration: t_end - t_step,
                    amplitude: a1,
                },
            ],
        }
    }

    /// Alternates `a_lo` and `a_hi` every half `period`, starting low, for
    /// `duration` seconds in total.
    pub fn periodic_square(drive_freq: f64, a_lo: f64, a_hi: f64, period: f64, duration: f64) -> Self {
        let half = period / 2.0;
        let mut segments = Vec::new();
        let mut t = 0.0;
        let mut high = false;
        // Guard against a non-positive period here; validate() reports it.
        while half > 0.0 && t < duration - 1e-12 {
            let d = half.min(duration - t);
            segments.push(Segment {
                duration: d,
                amplitude: if high { a_hi } else { a_lo },
            });
            t += d;
            high = !high;
        }
        if segments.is_empty() {
            segments.push(Segment {
                duration: half,
                amplitude: a_lo,
            });
        }
        Self { drive_freq, segments }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drive_freq.is_finite() && self.drive_freq > 0.0) {
            return Err(Error::Config(format!(
                "drive frequency must be positive, got {}",
                self.drive_freq
            )));
        }
        if self.segments.is_empty() {
            return Err(Error::Config("acceleration profile has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::Config(format!(
                    "segment {i}: duration must be positive, got {}",
                    s.duration
                )));
            }
            if !(s.amplitude.is_finite() && s.amplitude >= 0.0) {
                return Err(Error::Config(format!(
                    "segment {i}: amplitude must be non-negative, got {}",
                    s.amplitude
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Times at which one segment hands over to the next.
    pub fn step_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let n = self.segments.len();
        self.segments[..n.saturating_sub(1)]
            .iter()
            .map(|s| {
                t += s.duration;
                t
            })
            .collect()
    }

    /// Amplitude in g at time `t`. The last segment is held past the end.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return s.amplitude;
            }
        }
        self.segments.last().map_or(0.0, |s| s.amplitude)
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        self.amplitude_at(t) * (2.0 * std::f64::consts::PI * self.drive_freq * t).sin()
    }
}

/// Cumulative segment ends for fast lookup inside the integrators.
#[derive(Debug, Clone)]
pub(crate) struct AmplitudeTable {
    ends: Vec<f64>,
    amps: Vec<f64>,
}

impl AmplitudeTable {
    pub(crate) fn new(p: &AccelProfile) -> Self {
        let mut t = 0.0;
        let ends = p
            .segments
            .iter()
            .map(|s| {
                t += s.duration;
                t
            })
            .collect();
        Self {
            ends,
            amps: p.segments.iter().map(|s| s.amplitude).collect(),
        }
    }

    #[inline]
    pub(crate) fn at(&self, t: f64) -> f64 {
        let i = self.ends.partition_point(|&e| e <= t);
        self.amps[i.min(self.amps.len() - 1)]
    }
}
