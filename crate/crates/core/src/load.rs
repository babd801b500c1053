//! Extracted power for impedance and generator loads.
//!
//! Closed forms live next to [`phasor_nodal_oracle`], which solves the full
//! equivalent circuit by modified nodal analysis and shares no algebra with
//! them.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::harvester::HarvesterParams;
use crate::mna::Netlist;
use crate::ComplexValue;

/// Impedance used to stand in for an absent load element.
pub const OPEN_CIRCUIT_OHMS: f64 = 1e12;

/// What is attached to the harvester terminals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadSpec {
    /// Resistance in parallel with a reactance (positive = inductive).
    ParallelImpedance { r_load: f64, x_load: f64 },
    /// Sinusoidal voltage source `V sin(w t + phi)` referenced to the acceleration.
    VoltageGenerator { v_load: f64, phi_load: f64 },
}

impl LoadSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LoadSpec::ParallelImpedance { r_load, x_load } => {
                require_positive("r_load", r_load)?;
                if !x_load.is_finite() || x_load == 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "x_load",
                        value: x_load,
                        reason: "must be finite and nonzero",
                    });
                }
            }
            LoadSpec::VoltageGenerator { v_load, phi_load } => {
                crate::error::require_non_negative("v_load", v_load)?;
                if !phi_load.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "phi_load",
                        value: phi_load,
                        reason: "must be finite",
                    });
                }
            }
        }
        Ok(())
    }

    /// The conjugate-matched parallel load of `h`.
    pub fn matched(h: &HarvesterParams) -> Self {
        let opt = h.optimal_impedance();
        LoadSpec::ParallelImpedance {
            r_load: opt.r_opt,
            x_load: opt.x_opt,
        }
    }

    pub fn open_circuit() -> Self {
        LoadSpec::ParallelImpedance {
            r_load: OPEN_CIRCUIT_OHMS,
            x_load: OPEN_CIRCUIT_OHMS,
        }
    }
}

/// Internal coefficient of the impedance-load power expression.
pub fn psi_z(h: &HarvesterParams, r_load: f64, x_load: f64) -> f64 {
    let wc = h.omega_res() * h.c_p;
    wc * (1.0 + h.rho * h.rho) / h.rho * r_load * x_load * x_load / (r_load * r_load + x_load * x_load)
}

/// Normalized counterpart of [`psi_z`].
pub fn psi_n(rho: f64, r_n: f64, x_n: f64) -> f64 {
    (1.0 + rho * rho) * r_n * x_n / (r_n * r_n * rho * rho + x_n * x_n)
}

/// Ratio of load voltage to open-circuit drive, projected on the drive phase.
pub fn psi_v(h: &HarvesterParams, a_max: f64, v_load: f64, phi_load: f64) -> f64 {
    v_load / (h.delta * a_max) * phi_load.cos()
}

/// Average power into `R_load || jX_load`, watts.
pub fn power_impedance_load(h: &HarvesterParams, a_max: f64, r_load: f64, x_load: f64) -> Result<f64> {
    LoadSpec::ParallelImpedance { r_load, x_load }.validate()?;
    let psi = psi_z(h, r_load, x_load);
    let va = h.delta * a_max;
    let scale = va * va * h.omega_res() * h.c_p / (2.0 * h.rho);
    let mismatch = psi * r_load / x_load - h.rho;
    Ok(scale * psi / ((1.0 + psi).powi(2) + mismatch * mismatch))
}

/// `P_Z-load / P_max` in terms of `R_N = R/R_opt` and `X_N = X/X_opt`.
pub fn normalized_power_impedance(rho: f64, r_n: f64, x_n: f64) -> f64 {
    let psi = psi_n(rho, r_n, x_n);
    let a = 1.0 + psi * x_n;
    let b = rho * (psi * r_n - 1.0);
    4.0 * psi * x_n / (a * a + b * b)
}

/// Average power into a voltage generator and the current phasor flowing
/// into it. Negative power means the generator is feeding the harvester.
pub fn power_generator_load(
    h: &HarvesterParams,
    a_max: f64,
    v_load: f64,
    phi_load: f64,
) -> (f64, ComplexValue) {
    let v = ComplexValue::from_polar(v_load, phi_load);
    let current = (h.open_circuit_voltage(a_max) - v) / h.source_impedance();
    // Expanded form of psi_v (1 - psi_v / cos^2): no division by cos or by A.
    let va = h.delta * a_max;
    let p = 0.5 * h.omega_res() * h.c_p / h.rho * (va * v_load * phi_load.cos() - v_load * v_load);
    (p, current)
}

/// `P_V-load / P_max` in terms of `V_N = V/V_opt` and `Phi_N`. Independent
/// of the harvester.
pub fn normalized_power_generator(v_n: f64, phi_n: f64) -> f64 {
    // 2 V cos(phi) [1 - V / (2 cos(phi))] expanded, finite at |phi| = pi/2.
    2.0 * v_n * phi_n.cos() - v_n * v_n
}

/// Percentage of power lost by a generator frozen at its optimum for
/// `a_max_0` relative to a frozen optimal impedance, once the amplitude
/// becomes `a_max`.
///
/// Returned unclamped: values above 100 % mean reversed power flow.
pub fn lambda_waste(a_max_0: f64, a_max: f64) -> Result<f64> {
    require_positive("a_max_0", a_max_0)?;
    require_positive("a_max", a_max)?;
    let r = a_max_0 / a_max;
    Ok((1.0 - 2.0 * r * (1.0 - r / 2.0)) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedLoadPowers {
    /// Power into the impedance that was optimal at `a_max_0`.
    pub p_load_z0: f64,
    /// Power into the generator that was optimal at `a_max_0`.
    pub p_load_v0: f64,
    /// Maximum power at the tuning amplitude.
    pub p_max_0: f64,
}

pub fn fixed_load_powers(h: &HarvesterParams, a_max_0: f64, a_max: f64) -> Result<FixedLoadPowers> {
    require_positive("a_max_0", a_max_0)?;
    require_positive("a_max", a_max)?;
    let p_load_z0 = h.max_power(a_max);
    let r = a_max_0 / a_max;
    Ok(FixedLoadPowers {
        p_load_z0,
        p_load_v0: p_load_z0 * 2.0 * r * (1.0 - r / 2.0),
        p_max_0: h.max_power(a_max_0),
    })
}

/// Terminal quantities found by the nodal solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSolution {
    pub power: f64,
    pub v_load: ComplexValue,
    pub i_load: ComplexValue,
}

/// Solves the full equivalent circuit (source, `R_D`, `L_M`, `C_K` in
/// series, `C_p` across the terminals, then the load) at the resonance
/// frequency by modified nodal analysis.
pub fn phasor_nodal_oracle(h: &HarvesterParams, a_max: f64, load: &LoadSpec) -> Result<OracleSolution> {
    load.validate()?;
    let w = h.omega_res();
    let eq = h.equivalent_circuit();

    // 0: ground, 1: source, 2: after R_D, 3: after L_M, 4: terminal.
    let mut net = Netlist::new(4);
    net.voltage_source(1, 0, ComplexValue::new(h.delta * a_max, 0.0));
    net.admittance(1, 2, ComplexValue::new(1.0 / eq.r_d, 0.0));
    net.admittance(2, 3, ComplexValue::new(0.0, -1.0 / (w * eq.l_m)));
    net.admittance(3, 4, ComplexValue::new(0.0, w * eq.c_k));
    net.admittance(4, 0, ComplexValue::new(0.0, w * h.c_p));

    let generator_branch = match *load {
        LoadSpec::ParallelImpedance { r_load, x_load } => {
            net.admittance(4, 0, ComplexValue::new(1.0 / r_load, 0.0));
            net.admittance(4, 0, ComplexValue::new(0.0, -1.0 / x_load));
            None
        }
        LoadSpec::VoltageGenerator { v_load, phi_load } => {
            Some(net.voltage_source(4, 0, ComplexValue::from_polar(v_load, phi_load)))
        }
    };

    let sol = net.solve()?;
    let v_load = sol.node_voltage(4);
    let i_load = match (*load, generator_branch) {
        (LoadSpec::ParallelImpedance { r_load, x_load }, _) => {
            v_load * (ComplexValue::new(1.0 / r_load, -1.0 / x_load))
        }
        (_, Some(branch)) => sol.branch_current(branch),
        _ => unreachable!(),
    };
    let power = 0.5 * (v_load * i_load.conj()).re;
    Ok(OracleSolution {
        power,
        v_load,
        i_load,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    Linear,
    Log,
}

/// A sampled axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: AxisScale,
}

impl Axis {
    pub fn linear(min: f64, max: f64, points: usize) -> Self {
        Self {
            min,
            max,
            points,
            scale: AxisScale::Linear,
        }
    }

    pub fn log(min: f64, max: f64, points: usize) -> Self {
        Self {
            min,
            max,
            points,
            scale: AxisScale::Log,
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let fail = |reason| {
            Err(Error::DegenerateAxis {
                axis: name.to_string(),
                reason,
            })
        };
        if self.points < 2 {
            return fail("needs at least two points");
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max <= self.min {
            return fail("range must be finite and increasing");
        }
        if self.scale == AxisScale::Log && self.min <= 0.0 {
            return fail("logarithmic axis must be strictly positive");
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..self.points)
            .map(|i| {
                let t = i as f64 / n as f64;
                match self.scale {
                    AxisScale::Linear => self.min * (1.0 - t) + self.max * t,
                    AxisScale::Log => {
                        let (lo, hi) = (self.min.log10(), self.max.log10());
                        10f64.powf(lo * (1.0 - t) + hi * t)
                    }
                }
            })
            .collect()
    }
}

/// Which family of normalized curves or surfaces to materialize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepSpec {
    /// `P_Z-load/P_max` over `(R_N, X_N)` for a given coupling.
    Impedance { rho: f64, r_n: Axis, x_n: Axis },
    /// `P_V-load/P_max` over `(V_N, Phi_N)`.
    Generator { v_n: Axis, phi_n: Axis },
    /// Fixed-load comparison versus `A/A_0`. One row per ratio and curve.
    Ratio { ratio: Axis },
}

impl SweepSpec {
    pub fn impedance_default(rho: f64) -> Self {
        SweepSpec::Impedance {
            rho,
            r_n: Axis::log(0.1, 10.0, 101),
            x_n: Axis::log(0.1, 10.0, 101),
        }
    }

    pub fn generator_default() -> Self {
        SweepSpec::Generator {
            v_n: Axis::linear(0.0, 2.0, 101),
            phi_n: Axis::linear(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 101),
        }
    }

    pub fn ratio_default() -> Self {
        SweepSpec::Ratio {
            ratio: Axis::linear(0.5, 3.0, 101),
        }
    }
}

/// Curve identifiers used on the second axis of a ratio sweep.
pub mod ratio_curve {
    /// `P_max(A) / P_max-0`.
    pub const P_MAX: f64 = 0.0;
    /// `P_load-z0 / P_max-0`.
    pub const P_LOAD_Z0: f64 = 1.0;
    /// `P_load-v0 / P_max-0`.
    pub const P_LOAD_V0: f64 = 2.0;
    /// `lambda_waste` in percent.
    pub const LAMBDA_WASTE: f64 = 3.0;
}

/// Rectangular dataset in long format, `axis1` varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub axis1_name: String,
    pub axis2_name: String,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    /// Location and value of the largest entry, as `(i, j, value)`.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, v)| if v > best.1 { (k, v) } else { best },
            );
        (k / self.axis2.len(), k % self.axis2.len(), v)
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.axis1.iter().enumerate().flat_map(move |(i, &a)| {
            self.axis2
                .iter()
                .enumerate()
                .map(move |(j, &b)| (a, b, self.value(i, j)))
        })
    }

    /// CSV with header `axis1,axis2,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis1,axis2,value\n");
        for (a, b, v) in self.rows() {
            out.push_str(&format!("{},{},{}\n", fmt_num(a), fmt_num(b), fmt_num(v)));
        }
        out
    }
}

/// Locale-independent formatting with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

fn fill_grid(axis1: &[f64], axis2: &[f64], f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    let row = |a: f64| axis2.iter().map(|&b| f(a, b)).collect::<Vec<_>>();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        axis1.par_iter().map(|&a| row(a)).collect::<Vec<_>>().concat()
    }
    #[cfg(not(feature = "parallel"))]
    {
        axis1.iter().flat_map(|&a| row(a)).collect()
    }
}

pub fn grid_sweep(spec: &SweepSpec) -> Result<Dataset> {
    match *spec {
        SweepSpec::Impedance { rho, r_n, x_n } => {
            require_positive("rho", rho)?;
            r_n.check("r_n")?;
            x_n.check("x_n")?;
            let (a1, a2) = (r_n.values(), x_n.values());
            let values = fill_grid(&a1, &a2, |r, x| normalized_power_impedance(rho, r, x));
            Ok(Dataset {
                axis1_name: "r_n".into(),
                axis2_name: "x_n".into(),
                axis1: a1,
                axis2: a2,
                values,
            })
        }
        SweepSpec::Generator { v_n, phi_n } => {
            v_n.check("v_n")?;
            phi_n.check("phi_n")?;
            let (a1, a2) = (v_n.values(), phi_n.values());
            let values = fill_grid(&a1, &a2, normalized_power_generator);
            Ok(Dataset {
                axis1_name: "v_n".into(),
                axis2_name: "phi_n".into(),
                axis1: a1,
                axis2: a2,
                values,
            })
        }
        SweepSpec::Ratio { ratio } => {
            ratio.check("ratio")?;
            if ratio.min <= 0.0 {
                return Err(Error::DegenerateAxis {
                    axis: "ratio".into(),
                    reason: "amplitude ratio must be positive",
                });
            }
            let a1 = ratio.values();
            let curves = vec![
                ratio_curve::P_MAX,
                ratio_curve::P_LOAD_Z0,
                ratio_curve::P_LOAD_V0,
                ratio_curve::LAMBDA_WASTE,
            ];
            let mut values = Vec::with_capacity(a1.len() * curves.len());
            for &r in &a1 {
                // Normalized to P_max-0, so any harvester gives the same curves.
                let z0 = r * r;
                let v0 = z0 * 2.0 / r * (1.0 - 1.0 / (2.0 * r));
                values.extend_from_slice(&[z0, z0, v0, lambda_waste(1.0, r)?]);
            }
            Ok(Dataset {
                axis1_name: "a_ratio".into(),
                axis2_name: "curve".into(),
                axis1: a1,
                axis2: curves,
                values,
            })
        }
    }
}
