use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use harvest_core::identify::{default_axes, identify_surfaces, synthetic_surface, PowerSurface};
use harvest_core::interface::{
    approximation_check, corner_frequencies, emulated_admittance, hysteresis_thresholds, size_controller,
};
use harvest_core::load::{fixed_load_powers, fmt_num, grid_sweep, lambda_waste, Axis, SweepSpec};
use harvest_core::sim::{run_pno_2d, simulate_behavioral, simulate_switched, Fidelity, SimResult};

use crate::scenario::{ConfigError, LoadConfig, Output, Scenario};

/// Everything a command needs besides its own flags.
pub struct Context {
    pub scenario: Scenario,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Context {
    /// Creates the output directory and records the resolved scenario in it.
    pub fn prepare_out(&self) -> Result<()> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir)
                .map_err(|e| ConfigError(format!("cannot create output directory {}: {e}", dir.display())))?;
            self.write("scenario.toml", &self.scenario.to_config_string())?;
        }
        Ok(())
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let dir = self.out.as_deref().unwrap_or(Path::new("."));
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes `contents` to `name` in the output directory, or to `stdout`
    /// when there is none.
    fn emit(&self, name: &str, contents: &str, stdout: &mut dyn Write) -> Result<()> {
        if self.out.is_some() {
            self.write(name, contents)
        } else {
            stdout.write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn si(v: f64, unit: &str) -> String {
    let a = v.abs();
    let (scale, prefix) = if a == 0.0 || !a.is_finite() {
        (1.0, "")
    } else if a >= 1e6 {
        (1e-6, "M")
    } else if a >= 1e3 {
        (1e-3, "k")
    } else if a >= 1.0 {
        (1.0, "")
    } else if a >= 1e-3 {
        (1e3, "m")
    } else if a >= 1e-6 {
        (1e6, "u")
    } else if a >= 1e-9 {
        (1e9, "n")
    } else {
        (1e12, "p")
    };
    format!("{:.4} {prefix}{unit}", v * scale)
}

pub fn analyze(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let s = &ctx.scenario;
    let h = s.harvester;
    let a = s.analyze.a_max;
    let p_max = h.try_max_power(a)?;
    let opt = h.optimal_impedance();
    let zs = h.source_impedance();
    let (v_opt, phi_opt) = h.optimal_generator(a);

    let mut r = String::new();
    writeln!(
        r,
        "harvester: delta = {} V/g, rho = {}, f_res = {} Hz, C_p = {}, Q = {}",
        h.delta,
        h.rho,
        h.f_res,
        si(h.c_p, "F"),
        h.q_factor
    )?;
    writeln!(r, "amplitude: {a} g")?;
    writeln!(r, "P_max        {}", si(p_max, "W"))?;
    writeln!(r, "V_opt        {:.4} V at {:.4} rad", v_opt, phi_opt)?;
    writeln!(r, "Z_source     {:.2} {:+.2}j ohm", zs.re, zs.im)?;
    writeln!(r, "Z_opt series {:.2} {:+.2}j ohm", opt.series.re, opt.series.im)?;
    writeln!(
        r,
        "Z_opt par.   R = {:.2} ohm || X = {:.2} ohm",
        opt.r_opt, opt.x_opt
    )?;

    let mut table = String::from("ratio,a_max_g,lambda_waste_pct,p_max_w,p_load_v0_w\n");
    if !s.analyze.ratios.is_empty() {
        writeln!(r, "\nwasted power, tuned at {a} g")?;
        writeln!(
            r,
            "{:>8} {:>14} {:>12} {:>12}",
            "A/A0", "lambda_waste%", "P_z0", "P_v0"
        )?;
        for &ratio in &s.analyze.ratios {
            let a1 = ratio * a;
            let lw = lambda_waste(a, a1)?;
            let fl = fixed_load_powers(&h, a, a1)?;
            writeln!(
                r,
                "{:>8} {:>14.4} {:>12} {:>12}",
                ratio,
                lw,
                si(fl.p_load_z0, "W"),
                si(fl.p_load_v0, "W")
            )?;
            writeln!(
                table,
                "{},{},{},{},{}",
                fmt_num(ratio),
                fmt_num(a1),
                fmt_num(lw),
                fmt_num(fl.p_load_z0),
                fmt_num(fl.p_load_v0)
            )?;
        }
    }
    stdout.write_all(r.as_bytes())?;

    if ctx.out.is_some() {
        let row = format!(
            "a_max_g,p_max_w,v_opt_v,phi_opt_rad,z_source_re,z_source_im,z_opt_re,z_opt_im,r_opt_ohm,x_opt_ohm\n\
             {},{},{},{},{},{},{},{},{},{}\n",
            fmt_num(a),
            fmt_num(p_max),
            fmt_num(v_opt),
            fmt_num(phi_opt),
            fmt_num(zs.re),
            fmt_num(zs.im),
            fmt_num(opt.series.re),
            fmt_num(opt.series.im),
            fmt_num(opt.r_opt),
            fmt_num(opt.x_opt)
        );
        ctx.write("analysis.csv", &row)?;
        if !s.analyze.ratios.is_empty() {
            ctx.write("lambda_waste.csv", &table)?;
        }
    }
    Ok(())
}

pub fn sweep(ctx: &Context, spec: &SweepSpec, stdout: &mut dyn Write) -> Result<()> {
    let data = grid_sweep(spec)?;
    let name = match spec {
        SweepSpec::Impedance { .. } => "impedance.csv",
        SweepSpec::Generator { .. } => "generator.csv",
        SweepSpec::Ratio { .. } => "ratio.csv",
    };
    ctx.emit(name, &data.to_csv(), stdout)
}

fn trajectory_csv(points: &[harvest_core::sim::PnoPoint]) -> String {
    let mut s = String::from("t,v_load,phi_load,power\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_num(p.t),
            fmt_num(p.v_load),
            fmt_num(p.phi_load),
            fmt_num(p.power)
        );
    }
    s
}

pub fn simulate(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let s = &ctx.scenario;
    let h = s.harvester;
    let profile = s.profile.build(&h)?;
    if s.wants(Output::Traces) && ctx.out.is_none() {
        return Err(ConfigError("outputs include traces, which need --out".into()).into());
    }

    let mut trajectory = None;
    let result: SimResult = match (&s.controller, &s.load) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ConfigError(
                "simulate needs exactly one of the load.* and controller.* sections".into(),
            )
            .into())
        }
        (Some(cp), None) => {
            if s.sim.fidelity != Fidelity::Switched {
                return Err(
                    ConfigError("a controller scenario needs sim.fidelity = \"switched\"".into()).into(),
                );
            }
            simulate_switched(&h, cp, &profile, &s.sim)?
        }
        (None, Some(load)) => {
            if s.sim.fidelity != Fidelity::Behavioral {
                return Err(
                    ConfigError("a load.* scenario needs sim.fidelity = \"behavioral\"".into()).into(),
                );
            }
            match load {
                LoadConfig::Pno(pno) => {
                    let r = run_pno_2d(&h, &profile, pno, &s.sim)?;
                    if r.degenerate {
                        eprintln!("warning: both perturbation steps are zero; the tracker never moves");
                    }
                    if r.unreliable {
                        eprintln!("warning: dwell is shorter than three mechanical time constants");
                    }
                    trajectory = Some(trajectory_csv(&r.trajectory));
                    r.sim
                }
                other => {
                    let l = other
                        .behavioral(&h, profile.drive_freq)
                        .expect("fixed loads map to a behavioral load");
                    simulate_behavioral(&h, l, &profile, &s.sim)?
                }
            }
        }
    };

    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if s.wants(Output::Summary) {
        ctx.emit(
            "summary.csv",
            &result.summary_csv(s.summary.settle_fraction),
            stdout,
        )?;
    }
    if s.wants(Output::Traces) {
        ctx.write("traces.csv", &result.traces_csv())?;
        if let Some(t) = trajectory {
            ctx.write("pno_trajectory.csv", &t)?;
        }
    }
    Ok(())
}

pub struct IdentifyArgs {
    pub synthetic: bool,
    pub files: Vec<PathBuf>,
    pub c_p: Option<f64>,
}

pub fn identify(ctx: &Context, args: &IdentifyArgs, stdout: &mut dyn Write) -> Result<()> {
    let s = &ctx.scenario;
    let h = s.harvester;
    let mut surfaces: Vec<PowerSurface> = Vec::new();
    if args.synthetic {
        for (k, &a) in s.identify.amplitudes.iter().enumerate() {
            let (v, phi) = default_axes(&h, a);
            let surf = synthetic_surface(&h, a, &v, &phi, s.identify.noise, ctx.seed.wrapping_add(k as u64))?;
            if s.wants(Output::Grids) && ctx.out.is_some() {
                ctx.write(&format!("surface_{k}.csv"), &surf.to_csv())?;
            }
            surfaces.push(surf);
        }
    }
    for path in &args.files {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read surface {}: {e}", path.display())))?;
        let surf = PowerSurface::from_csv(&text).with_context(|| format!("in {}", path.display()))?;
        surfaces.push(surf);
    }
    if surfaces.is_empty() {
        return Err(ConfigError("identify needs --synthetic or at least one surface file".into()).into());
    }

    let c_p = args.c_p.unwrap_or(h.c_p);
    let report = identify_surfaces(&surfaces, c_p)?;

    let mut r = String::new();
    let mut table =
        String::from("a_max_g,v_opt_v,phi_opt_rad,p_max_w,i_opt_a,delta_v_per_g,rho,r_opt_ohm,x_opt_ohm\n");
    writeln!(
        r,
        "{:>7} {:>9} {:>9} {:>11} {:>9} {:>8} {:>10} {:>10}",
        "A [g]", "V_opt", "phi_opt", "P_max", "delta", "rho", "R_opt", "X_opt"
    )?;
    let opt_num = |x: Option<f64>| x.map_or(String::new(), fmt_num);
    let opt_txt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.1}"));
    for sr in &report.surfaces {
        writeln!(
            r,
            "{:>7} {:>9.4} {:>9.4} {:>11} {:>9.4} {:>8.4} {:>10} {:>10}",
            sr.a_max,
            sr.optimum.v_opt,
            sr.optimum.phi_opt,
            si(sr.optimum.p_max, "W"),
            sr.params.delta,
            sr.params.rho,
            opt_txt(sr.r_opt),
            opt_txt(sr.x_opt)
        )?;
        writeln!(
            table,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(sr.a_max),
            fmt_num(sr.optimum.v_opt),
            fmt_num(sr.optimum.phi_opt),
            fmt_num(sr.optimum.p_max),
            opt_num(sr.optimum.i_opt),
            fmt_num(sr.params.delta),
            fmt_num(sr.params.rho),
            opt_num(sr.r_opt),
            opt_num(sr.x_opt)
        )?;
    }
    writeln!(
        r,
        "\nmean delta = {:.4} V/g, mean rho = {:.4}",
        report.delta, report.rho
    )?;
    if let (Some(rs), Some(xs)) = (report.r_spread, report.x_spread) {
        writeln!(
            r,
            "spread across amplitudes: R_opt {:.2} %, X_opt {:.2} %",
            rs * 100.0,
            xs * 100.0
        )?;
    }
    stdout.write_all(r.as_bytes())?;
    if ctx.out.is_some() {
        ctx.write("identification.csv", &table)?;
    }
    Ok(())
}

pub fn size(ctx: &Context, tolerance: Option<f64>, stdout: &mut dyn Write) -> Result<()> {
    let s = &ctx.scenario;
    let h = s.harvester;
    let rep = size_controller(&h, &s.sizing.fixed, tolerance.unwrap_or(s.sizing.tolerance))?;
    let cp = rep.params;
    let omega = h.omega_res();
    let th = hysteresis_thresholds(&cp);
    let (fx, fy) = corner_frequencies(&cp);
    let check = approximation_check(&cp, h.f_res, 3.0, 10.0);
    let approx = emulated_admittance(&cp, omega);

    let mut r = String::new();
    writeln!(r, "{:<10} {:>14}", "part", "value")?;
    for (name, v, unit) in [
        ("R_m", cp.r_m, "ohm"),
        ("R_x", cp.r_x, "ohm"),
        ("R_y", cp.r_y, "ohm"),
        ("R_f", cp.r_f, "ohm"),
        ("R_a", cp.r_a, "ohm"),
        ("R_b", cp.r_b, "ohm"),
        ("R_p", cp.r_p, "ohm"),
        ("R_q", cp.r_q, "ohm"),
        ("C_x", cp.c_x, "F"),
        ("L_b", cp.l_b, "H"),
        ("V+", cp.v_supply, "V"),
    ] {
        writeln!(r, "{:<10} {:>14}", name, si(v, unit))?;
    }
    writeln!(r, "{:<10} {:>14.4}", "R_a/R_b", cp.r_a / cp.r_b)?;
    writeln!(r)?;
    writeln!(r, "hysteresis dV_T     {}", si(th.delta_v_t, "V"))?;
    writeln!(r, "corner f_x          {}", si(fx, "Hz"))?;
    writeln!(r, "corner f_y          {}", si(fy, "Hz"))?;
    writeln!(
        r,
        "corner check        {:?} (f_x/f = {:.3}, f_y/f = {:.1})",
        check.validity, check.ratio_x, check.ratio_y
    )?;
    writeln!(
        r,
        "R_e                 {:.1} ohm (target {:.1}, error {:.3} %)",
        approx.r_e,
        rep.target_r_e,
        rep.r_error * 100.0
    )?;
    writeln!(
        r,
        "C_n                 {} (target {}, error {:.3} %)",
        si(approx.c_n, "F"),
        si(rep.target_c_n, "F"),
        rep.c_error * 100.0
    )?;
    stdout.write_all(r.as_bytes())?;

    if ctx.out.is_some() {
        let mut sized = ctx.scenario.clone();
        sized.controller = Some(cp);
        sized.load = None;
        let text: String = sized
            .to_config_string()
            .lines()
            .filter(|l| l.starts_with("controller."))
            .map(|l| format!("{l}\n"))
            .collect();
        ctx.write("controller.toml", &text)?;
    }
    Ok(())
}

/// Axis helper shared by the sweep flags.
pub fn axis(log: bool, from: f64, to: f64, points: usize) -> Axis {
    if log {
        Axis::log(from, to, points)
    } else {
        Axis::linear(from, to, points)
    }
}
