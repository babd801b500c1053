//! Recovers harvester parameters and the optimal load from a measured or
//! synthetic surface of extracted power over `(V_load, Phi_load)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{require_positive, Error, Result};
use crate::harvester::HarvesterParams;
use crate::load::{fmt_num, power_generator_load, Axis};
use crate::ComplexValue;

/// Power (and optionally current amplitude) sampled on a rectangular
/// `v_load x phi_load` grid, row-major with `v_load` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSurface {
    pub v_load: Vec<f64>,
    pub phi_load: Vec<f64>,
    pub power: Vec<f64>,
    /// Amplitude of the load current, A.
    pub current: Option<Vec<f64>>,
    /// Acceleration amplitude, g.
    pub a_max: f64,
    /// Drive frequency, Hz.
    pub freq: f64,
}

impl PowerSurface {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.v_load.len(), self.phi_load.len());
        if n < 3 || m < 3 {
            return Err(Error::Surface(format!("grid is {n} x {m}; need at least 3 x 3")));
        }
        if self.power.len() != n * m {
            return Err(Error::Surface(format!(
                "{} power values for a {n} x {m} grid",
                self.power.len()
            )));
        }
        if let Some(c) = &self.current {
            if c.len() != n * m {
                return Err(Error::Surface("current grid does not match power grid".into()));
            }
        }
        let increasing = |a: &[f64]| a.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.v_load) || !increasing(&self.phi_load) {
            return Err(Error::Surface("axes must be strictly increasing".into()));
        }
        if self.power.iter().any(|p| !p.is_finite()) {
            return Err(Error::Surface("non-finite power value".into()));
        }
        if !self.power.iter().any(|&p| p > 0.0) {
            return Err(Error::Surface("no strictly positive power value".into()));
        }
        require_positive("a_max", self.a_max)?;
        require_positive("freq", self.freq)?;
        Ok(())
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.power[i * self.phi_load.len() + j]
    }

    /// Grid CSV preceded by a `# a_max=<g> f=<Hz>` line. A fourth column
    /// carries the current amplitude when present.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# a_max={} f={}\n", self.a_max, self.freq);
        s.push_str(if self.current.is_some() {
            "v_load,phi_load,power,i_load\n"
        } else {
            "v_load,phi_load,power\n"
        });
        let m = self.phi_load.len();
        for (i, &v) in self.v_load.iter().enumerate() {
            for (j, &phi) in self.phi_load.iter().enumerate() {
                let _ = write!(
                    s,
                    "{},{},{}",
                    fmt_num(v),
                    fmt_num(phi),
                    fmt_num(self.power[i * m + j])
                );
                if let Some(c) = &self.current {
                    let _ = write!(s, ",{}", fmt_num(c[i * m + j]));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut a_max = None;
        let mut freq = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    let parse = |v: &str| {
                        v.parse::<f64>().map_err(|_| {
                            Error::Surface(format!("line {}: bad metadata value {v:?}", lineno + 1))
                        })
                    };
                    if let Some(v) = tok.strip_prefix("a_max=") {
                        a_max = Some(parse(v)?);
                    } else if let Some(v) = tok.strip_prefix("f=") {
                        freq = Some(parse(v)?);
                    }
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                    continue;
                }
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Surface(format!("line {}: not a numeric row", lineno + 1)))?;
            if vals.len() != 3 && vals.len() != 4 {
                return Err(Error::Surface(format!(
                    "line {}: expected 3 or 4 columns, got {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            if let Some(first) = rows.first() {
                if first.len() != vals.len() {
                    return Err(Error::Surface(format!(
                        "line {}: column count changed",
                        lineno + 1
                    )));
                }
            }
            rows.push(vals);
        }
        let a_max = a_max.ok_or_else(|| Error::Surface("missing `# a_max=` metadata".into()))?;
        let freq = freq.ok_or_else(|| Error::Surface("missing `f=` metadata".into()))?;
        if rows.is_empty() {
            return Err(Error::Surface("no data rows".into()));
        }
        // Row-major with v_load outer: the phi axis is the run of rows
        // sharing the first v_load.
        let m = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
        if !rows.len().is_multiple_of(m) {
            return Err(Error::Surface("grid is not rectangular".into()));
        }
        let phi_load: Vec<f64> = rows[..m].iter().map(|r| r[1]).collect();
        let v_load: Vec<f64> = rows.iter().step_by(m).map(|r| r[0]).collect();
        for (k, r) in rows.iter().enumerate() {
            if r[0] != v_load[k / m] || r[1] != phi_load[k % m] {
                return Err(Error::Surface(format!("row {} breaks the grid order", k + 1)));
            }
        }
        let s = Self {
            v_load,
            phi_load,
            power: rows.iter().map(|r| r[2]).collect(),
            current: (rows[0].len() == 4).then(|| rows.iter().map(|r| r[3]).collect()),
            a_max,
            freq,
        };
        s.validate()?;
        Ok(s)
    }

    /// Bilinear interpolation of the current grid.
    fn current_at(&self, v: f64, phi: f64) -> Option<f64> {
        let c = self.current.as_ref()?;
        let m = self.phi_load.len();
        let locate = |axis: &[f64], x: f64| {
            let k = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
            (k, ((x - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0))
        };
        let (i, s) = locate(&self.v_load, v);
        let (j, t) = locate(&self.phi_load, phi);
        let g = |a: usize, b: usize| c[a * m + b];
        Some(
            (1.0 - s) * ((1.0 - t) * g(i, j) + t * g(i, j + 1))
                + s * ((1.0 - t) * g(i + 1, j) + t * g(i + 1, j + 1)),
        )
    }
}

/// Surface from the closed-form generator-load power of `h`, with optional
/// uniform relative noise `noise` seeded by `seed`.
pub fn synthetic_surface(
    h: &HarvesterParams,
    a_max: f64,
    v_axis: &Axis,
    phi_axis: &Axis,
    noise: f64,
    seed: u64,
) -> Result<PowerSurface> {
    h.validate()?;
    require_positive("a_max", a_max)?;
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "noise",
            value: noise,
            reason: "must be a non-negative fraction",
        });
    }
    let v_load = v_axis.values();
    let phi_load = phi_axis.values();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut power = Vec::with_capacity(v_load.len() * phi_load.len());
    let mut current = Vec::with_capacity(power.capacity());
    for &v in &v_load {
        for &phi in &phi_load {
            let (p, i) = power_generator_load(h, a_max, v, phi);
            let (np, ni) = if noise > 0.0 {
                (rng.random_range(-noise..=noise), rng.random_range(-noise..=noise))
            } else {
                (0.0, 0.0)
            };
            power.push(p * (1.0 + np));
            current.push(i.norm() * (1.0 + ni));
        }
    }
    let s = PowerSurface {
        v_load,
        phi_load,
        power,
        current: Some(current),
        a_max,
        freq: h.f_res,
    };
    s.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub v_opt: f64,
    pub phi_opt: f64,
    pub p_max: f64,
    /// Current amplitude at the optimum, when the surface carries currents.
    pub i_opt: Option<f64>,
}

/// Grid argmax refined by a least-squares biquadratic over its 3 x 3
/// neighbourhood. Falls back to the grid vertex when the fit has no
/// maximum inside the neighbourhood.
pub fn locate_optimum(s: &PowerSurface) -> Result<Optimum> {
    s.validate()?;
    let (n, m) = (s.v_load.len(), s.phi_load.len());
    let (mut bi, mut bj) = (0, 0);
    for i in 0..n {
        for j in 0..m {
            if s.at(i, j) > s.at(bi, bj) {
                (bi, bj) = (i, j);
            }
        }
    }
    if bi == 0 || bj == 0 || bi == n - 1 || bj == m - 1 {
        return Err(Error::UnbracketedOptimum {
            v_load: s.v_load[bi],
            phi_load: s.phi_load[bj],
            power: s.at(bi, bj),
        });
    }
    let (x0, y0) = (s.v_load[bi], s.phi_load[bj]);
    let hx = 0.5 * (s.v_load[bi + 1] - s.v_load[bi - 1]);
    let hy = 0.5 * (s.phi_load[bj + 1] - s.phi_load[bj - 1]);
    let mut a = DMatrix::<f64>::zeros(9, 6);
    let mut b = DVector::<f64>::zeros(9);
    let mut r = 0;
    for di in [-1i32, 0, 1] {
        for dj in [-1i32, 0, 1] {
            let (i, j) = ((bi as i32 + di) as usize, (bj as i32 + dj) as usize);
            let (u, w) = ((s.v_load[i] - x0) / hx, (s.phi_load[j] - y0) / hy);
            let row = [1.0, u, w, u * u, u * w, w * w];
            for (c, val) in row.iter().enumerate() {
                a[(r, c)] = *val;
            }
            b[r] = s.at(i, j);
            r += 1;
        }
    }
    let vertex = Optimum {
        v_opt: x0,
        phi_opt: y0,
        p_max: s.at(bi, bj),
        i_opt: s.current_at(x0, y0),
    };
    let Ok(coef) = a.svd(true, true).solve(&b, 1e-14) else {
        return Ok(vertex);
    };
    let hess = Matrix2::new(2.0 * coef[3], coef[4], coef[4], 2.0 * coef[5]);
    let negative_definite = hess[(0, 0)] < 0.0 && hess.determinant() > 0.0;
    let Some(step) = hess
        .try_inverse()
        .map(|inv| -(inv * Vector2::new(coef[1], coef[2])))
    else {
        return Ok(vertex);
    };
    let (u, w) = (step[0], step[1]);
    if !negative_definite || u.abs() > 1.0 || w.abs() > 1.0 {
        return Ok(vertex);
    }
    let p = coef[0] + coef[1] * u + coef[2] * w + coef[3] * u * u + coef[4] * u * w + coef[5] * w * w;
    let (v_opt, phi_opt) = (x0 + u * hx, y0 + w * hy);
    Ok(Optimum {
        v_opt,
        phi_opt,
        p_max: p,
        i_opt: s.current_at(v_opt, phi_opt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Identified {
    /// V/g.
    pub delta: f64,
    pub rho: f64,
}

/// `delta = 2 V_opt / A` and `rho = (delta A)^2 w C_p / (8 P_max)`.
pub fn identify_parameters(v_opt: f64, p_max: f64, a_max: f64, f_res: f64, c_p: f64) -> Result<Identified> {
    require_positive("v_opt", v_opt)?;
    require_positive("p_max", p_max)?;
    require_positive("a_max", a_max)?;
    require_positive("f_res", f_res)?;
    require_positive("c_p", c_p)?;
    let delta = 2.0 * v_opt / a_max;
    let va = delta * a_max;
    let omega = 2.0 * std::f64::consts::PI * f_res;
    Ok(Identified {
        delta,
        rho: va * va * omega * c_p / (8.0 * p_max),
    })
}

/// Series optimal impedance from the amplitudes and power at the optimum.
/// The reactive part is taken inductive.
pub fn impedance_from_operating_point(v_opt: f64, i_opt: f64, p_max: f64) -> Result<ComplexValue> {
    require_positive("v_opt", v_opt)?;
    require_positive("i_opt", i_opt)?;
    require_positive("p_max", p_max)?;
    let c = 2.0 * p_max / (v_opt * i_opt);
    // Allow round-off on a purely resistive point.
    if c > 1.0 + 1e-12 {
        return Err(Error::InvalidMeasurement(format!(
            "2 P_max = {:.6e} W exceeds V_opt I_opt = {:.6e} W",
            2.0 * p_max,
            v_opt * i_opt
        )));
    }
    let theta = c.min(1.0).acos();
    Ok(ComplexValue::from_polar(v_opt / i_opt, theta))
}

/// Parallel `R || jX` equivalent to the series impedance `z`. A zero real
/// or imaginary part gives an infinite (absent) parallel element.
pub fn parallel_equivalents(z: ComplexValue) -> (f64, f64) {
    let mag2 = z.norm_sqr();
    let div = |part: f64| if part == 0.0 { f64::INFINITY } else { mag2 / part };
    (div(z.re), div(z.im))
}

/// Everything recovered from one surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceReport {
    pub a_max: f64,
    pub optimum: Optimum,
    pub params: Identified,
    pub z_opt: Option<ComplexValue>,
    pub r_opt: Option<f64>,
    pub x_opt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub surfaces: Vec<SurfaceReport>,
    pub delta: f64,
    pub rho: f64,
    /// Largest relative spread `(max - min) / mean` of `R_opt` and `X_opt`
    /// across surfaces.
    pub r_spread: Option<f64>,
    pub x_spread: Option<f64>,
}

fn spread(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
        (l.min(x), h.max(x))
    });
    Some((hi - lo) / mean)
}

/// Locate, identify and convert each surface; `c_p` comes from a separate
/// capacitance measurement.
pub fn identify_surfaces(surfaces: &[PowerSurface], c_p: f64) -> Result<PipelineReport> {
    if surfaces.is_empty() {
        return Err(Error::Surface("no surfaces given".into()));
    }
    let mut out = Vec::with_capacity(surfaces.len());
    for s in surfaces {
        let optimum = locate_optimum(s)?;
        let params = identify_parameters(optimum.v_opt, optimum.p_max, s.a_max, s.freq, c_p)?;
        let z_opt = optimum
            .i_opt
            .map(|i| impedance_from_operating_point(optimum.v_opt, i, optimum.p_max))
            .transpose()?;
        let par = z_opt.map(parallel_equivalents);
        out.push(SurfaceReport {
            a_max: s.a_max,
            optimum,
            params,
            z_opt,
            r_opt: par.map(|p| p.0),
            x_opt: par.map(|p| p.1),
        });
    }
    let k = out.len() as f64;
    let rs: Vec<f64> = out.iter().filter_map(|r| r.r_opt).collect();
    let xs: Vec<f64> = out.iter().filter_map(|r| r.x_opt).collect();
    Ok(PipelineReport {
        delta: out.iter().map(|r| r.params.delta).sum::<f64>() / k,
        rho: out.iter().map(|r| r.params.rho).sum::<f64>() / k,
        r_spread: spread(&rs),
        x_spread: spread(&xs),
        surfaces: out,
    })
}

/// Default axes wide enough to bracket the optimum of `h` at `a_max`.
pub fn default_axes(h: &HarvesterParams, a_max: f64) -> (Axis, Axis) {
    let v_opt = h.delta * a_max / 2.0;
    (Axis::linear(0.0, 2.0 * v_opt, 81), Axis::linear(-0.6, 0.6, 61))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rig() -> HarvesterParams {
        HarvesterParams::ppa4011()
    }

    #[test]
    fn rig_operating_point() {
        let id = identify_parameters(4.0, 3.1e-3, 1.0, 137.6, 405e-9).unwrap();
        assert_relative_eq!(id.delta, 8.0);
        assert!((id.rho - 0.9).abs() < 0.01, "{}", id.rho);
        let halved = identify_parameters(4.0, 1.55e-3, 1.0, 137.6, 405e-9).unwrap();
        assert_relative_eq!(halved.rho, 2.0 * id.rho, max_relative = 1e-12);
    }

    #[test]
    fn impedance_of_rig_optimum() {
        let z = impedance_from_operating_point(4.0, 2.094e-3, 3.11e-3).unwrap();
        assert!((z.re - 1420.0).abs() < 2.0 && (z.im - 1278.0).abs() < 3.0, "{z}");
        let r = impedance_from_operating_point(2.0, 1.0, 1.0).unwrap();
        assert_eq!(r.im, 0.0);
        let x = impedance_from_operating_point(2.0, 1.0, 1e-300).unwrap();
        assert!((x.arg() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(matches!(
            impedance_from_operating_point(2.0, 1.0, 1.1),
            Err(Error::InvalidMeasurement(_))
        ));
    }

    #[test]
    fn parallel_of_rig_series() {
        let (r, x) = parallel_equivalents(ComplexValue::new(1419.9, 1277.9));
        assert!((r - 2570.0).abs() < 1.0 && (x - 2856.0).abs() < 1.0, "{r} {x}");
        let (r, x) = parallel_equivalents(ComplexValue::new(50.0, 0.0));
        assert_eq!((r, x), (50.0, f64::INFINITY));
    }

    #[test]
    fn synthetic_optimum_is_found() {
        let h = rig();
        for a in [0.75, 1.0, 1.25] {
            let (va, pa) = default_axes(&h, a);
            let s = synthetic_surface(&h, a, &va, &pa, 0.0, 0).unwrap();
            let o = locate_optimum(&s).unwrap();
            assert!((o.v_opt - 4.0 * a).abs() < 0.05, "{o:?}");
            assert!(o.phi_opt.abs() < 0.01);
            assert_relative_eq!(o.p_max, h.max_power(a), max_relative = 1e-6);
        }
    }

    #[test]
    fn single_peak_cell_returns_fitted_vertex() {
        let mut power = vec![0.0; 25];
        power[12] = 1.0;
        let s = PowerSurface {
            v_load: (0..5).map(f64::from).collect(),
            phi_load: (0..5).map(f64::from).collect(),
            power,
            current: None,
            a_max: 1.0,
            freq: 100.0,
        };
        let o = locate_optimum(&s).unwrap();
        assert_relative_eq!(o.v_opt, 2.0, epsilon = 1e-12);
        assert_relative_eq!(o.phi_opt, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_peak_is_unbracketed() {
        let h = rig();
        let s = synthetic_surface(
            &h,
            1.0,
            &Axis::linear(0.0, 3.0, 31),
            &Axis::linear(-0.5, 0.5, 11),
            0.0,
            0,
        )
        .unwrap();
        assert!(matches!(
            locate_optimum(&s),
            Err(Error::UnbracketedOptimum { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let h = rig();
        let s = synthetic_surface(
            &h,
            1.0,
            &Axis::linear(0.0, 8.0, 9),
            &Axis::linear(-0.5, 0.5, 5),
            0.01,
            7,
        )
        .unwrap();
        let back = PowerSurface::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.v_load.len(), 9);
        assert_eq!(back.phi_load.len(), 5);
        for (a, b) in s.power.iter().zip(&back.power) {
            assert_relative_eq!(*a, *b, max_relative = 1e-10);
        }
        assert!(back.current.is_some());
        assert!(PowerSurface::from_csv("v_load,phi_load,power\n1,2,3\n").is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let h = rig();
        let (va, pa) = default_axes(&h, 1.0);
        let a = synthetic_surface(&h, 1.0, &va, &pa, 0.02, 11).unwrap();
        let b = synthetic_surface(&h, 1.0, &va, &pa, 0.02, 11).unwrap();
        let c = synthetic_surface(&h, 1.0, &va, &pa, 0.02, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn identification_inverts_forward_model(
            delta in 0.5f64..20.0, rho in 0.05f64..5.0, f in 20.0f64..2000.0,
            c_p in 1e-9f64..1e-5, a in 0.05f64..3.0,
        ) {
            let h = HarvesterParams::new(delta, rho, f, c_p, 20.0).unwrap();
            let (v, _) = h.optimal_generator(a);
            let id = identify_parameters(v, h.max_power(a), a, f, c_p).unwrap();
            prop_assert!(((id.delta - delta) / delta).abs() < 1e-9);
            prop_assert!(((id.rho - rho) / rho).abs() < 1e-9);
        }

        #[test]
        fn impedance_reproduces_power(v in 0.1f64..10.0, i in 1e-5f64..1e-1, frac in 0.01f64..1.0) {
            let p = 0.5 * v * i * frac;
            let z = impedance_from_operating_point(v, i, p).unwrap();
            prop_assert!((z.norm() - v / i).abs() <= 1e-12 * (v / i));
            prop_assert!((z.re * i * i / 2.0 - p).abs() <= 1e-12 * p);
        }

        #[test]
        fn parallel_round_trip(re in 1.0f64..1e5, im in -1e5f64..1e5) {
            prop_assume!(im.abs() > 1e-3);
            let z = ComplexValue::new(re, im);
            let (r, x) = parallel_equivalents(z);
            // r || jx
            let back = ComplexValue::new(r, 0.0) * ComplexValue::new(0.0, x)
                / ComplexValue::new(r, x);
            prop_assert!((back - z).norm() <= 1e-12 * z.norm());
        }
    }
}
