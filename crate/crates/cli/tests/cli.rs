use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use harvest_core::identify::synthetic_surface;
use harvest_core::load::Axis;
use harvest_core::HarvesterParams;

fn harvest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harvest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// Column `name` of a single-row CSV.
fn summary_field(csv: &str, name: &str) -> f64 {
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = head.iter().position(|h| *h == name).unwrap();
    row[k].parse().unwrap()
}

#[test]
fn analyze_reports_optimum_and_waste_table() {
    let o = harvest(&["analyze"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("P_max        3.1124 mW"), "{s}");
    assert!(s.contains("R = 2570.33 ohm || X = 2855.92 ohm"), "{s}");
    assert!(s.contains("Z_source     1420.07 -1278.07j ohm"), "{s}");

    let rows: Vec<Vec<&str>> = s
        .lines()
        .skip_while(|l| !l.contains("lambda_waste%"))
        .skip(1)
        .map(|l| l.split_whitespace().collect())
        .collect();
    let lw: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(lw, [("0.5", "100.0000"), ("1", "0.0000"), ("2", "25.0000")]);
}

#[test]
fn analyze_without_ratios_omits_waste_section() {
    let o = harvest(&["analyze", "--ratios"]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("wasted power"));
}

#[test]
fn analyze_exports_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = harvest(&["analyze", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let a = fs::read_to_string(out.join("analysis.csv")).unwrap();
    assert!((summary_field(&a, "r_opt_ohm") - 2570.33).abs() < 0.01);
    let lw = fs::read_to_string(out.join("lambda_waste.csv")).unwrap();
    assert_eq!(lw.lines().count(), 4);
    assert!(out.join("scenario.toml").exists());
}

#[test]
fn sweeps_emit_grid_csv() {
    let o = harvest(&["sweep", "impedance", "--rho", "0.4", "--points", "21"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.starts_with("axis1,axis2,value\n"));
    assert_eq!(s.lines().count(), 1 + 21 * 21);
    let best = s
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|x| x.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .max_by(|a, b| a[2].total_cmp(&b[2]))
        .unwrap();
    assert!((best[0] - 1.0).abs() < 1e-12 && (best[1] - 1.0).abs() < 1e-12);
    assert!((best[2] - 1.0).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let o = harvest(&["sweep", "generator", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("generator.csv").exists());

    let o = harvest(&["sweep", "ratio", "--from", "0.5", "--to", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1 + 101 * 4);
}

#[test]
fn degenerate_sweep_axis_is_a_config_error() {
    assert_eq!(code(&harvest(&["sweep", "generator", "--points", "1"])), 2);
}

#[test]
fn malformed_config_names_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "a.toml",
        "harvester.rho = 0.9\nharvester.delta_v_per_g =\n",
    );
    let o = harvest(&["--config", &bad, "analyze"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let typed = write_config(dir.path(), "b.toml", "harvester.rho = \"high\"\n");
    let o = harvest(&["--preset", "ppa4011", "--config", &typed, "analyze"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("harvester.rho"));

    let unknown = write_config(dir.path(), "c.toml", "harvester.mass = 1.0\n");
    let o = harvest(&["--preset", "ppa4011", "--config", &unknown, "analyze"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("harvester.mass"));
}

#[test]
fn zero_duration_profile_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "z.toml",
        "load.kind = \"matched\"\nprofile.kind = \"constant\"\nprofile.amplitude = 1.0\nprofile.duration = 0.0\n",
    );
    assert_eq!(
        code(&harvest(&["--preset", "ppa4011", "--config", &c, "simulate"])),
        2
    );
}

#[test]
fn simulate_needs_exactly_one_of_load_and_controller() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "m.toml", "load.kind = \"matched\"\n");
    assert_eq!(
        code(&harvest(&["--preset", "table1", "--config", &c, "simulate"])),
        2
    );
    assert_eq!(code(&harvest(&["--preset", "ppa4011", "simulate"])), 2);
}

#[test]
fn unstable_integration_exits_with_integration_code() {
    let dir = tempfile::tempdir().unwrap();
    // Lightly damped 1.2 mH || C_p tank far beyond the RK4 stability limit.
    let c = write_config(
        dir.path(),
        "i.toml",
        "load.kind = \"parallel_impedance\"\nload.r_load = 1e9\nload.x_load = 1.0\nsim.dt = 1e-4\n",
    );
    assert_eq!(
        code(&harvest(&["--preset", "ppa4011", "--config", &c, "simulate"])),
        5
    );
}

#[test]
fn step_scenario_reports_settle_time_and_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "step.toml",
        "load.kind = \"matched\"\n\
         profile.kind = \"step\"\nprofile.a0 = 0.0\nprofile.a1 = 1.0\nprofile.t_step = 0.02\nprofile.duration = 0.6\n\
         outputs = [\"summary\", \"traces\"]\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = harvest(&[
            "--preset",
            "ppa4011",
            "--config",
            &c,
            "--out",
            out.to_str().unwrap(),
            "simulate",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["summary.csv", "traces.csv", "scenario.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let traces = fs::read_to_string(a.join("traces.csv")).unwrap();
    assert!(traces.starts_with("t,accel,v_load,i_load,p_dc,x,x_dot\n"));

    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    let settle = summary_field(&summary, "settle_time_s");
    assert!((0.05..=0.2).contains(&settle), "settle {settle}");
    let p = summary_field(&summary, "avg_power_w");
    assert!((p / 3.1124e-3 - 1.0).abs() < 0.01, "power {p}");

    // The recorded scenario reproduces the run on its own.
    let again = dir.path().join("c");
    let scen = a.join("scenario.toml");
    let o = harvest(&[
        "--config",
        scen.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(a.join("traces.csv")).unwrap(),
        fs::read(again.join("traces.csv")).unwrap()
    );
}

#[test]
fn switched_constant_drive_lands_in_measured_band() {
    let o = harvest(&["--preset", "table1", "simulate"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.lines().nth(1).unwrap().starts_with("switched,"));
    let p = summary_field(&s, "avg_power_w");
    assert!((p / 2.98e-3 - 1.0).abs() < 0.10, "power {p}");
    assert!(summary_field(&s, "phase_lag_rad") > 0.0);
}

#[test]
fn pno_scenario_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "p.toml",
        "load.kind = \"pno\"\nload.start_v = 3.0\nprofile.kind = \"constant\"\nprofile.amplitude = 1.0\n\
         profile.duration = 2.0\noutputs = [\"traces\"]\n",
    );
    let out = dir.path().join("o");
    let o = harvest(&[
        "--preset",
        "ppa4011",
        "--config",
        &c,
        "--out",
        out.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(code(&o), 0);
    let t = fs::read_to_string(out.join("pno_trajectory.csv")).unwrap();
    assert!(t.starts_with("t,v_load,phi_load,power\n"));
    assert!(t.lines().count() > 5);
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn synthetic_identification_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = harvest(&["identify", "--synthetic", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("identification.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!((r[5] / 8.0 - 1.0).abs() < 0.01, "delta {}", r[5]);
        assert!((r[6] / 0.9 - 1.0).abs() < 0.01, "rho {}", r[6]);
        assert!((r[7] / rows[0][7] - 1.0).abs() < 0.02);
        assert!((r[8] / rows[0][8] - 1.0).abs() < 0.02);
    }
}

#[test]
fn identification_reads_surface_files_and_flags_boundary_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let h = HarvesterParams::ppa4011();
    let phi = Axis::linear(-0.6, 0.6, 31);

    let good = synthetic_surface(&h, 1.0, &Axis::linear(0.0, 8.0, 41), &phi, 0.0, 1).unwrap();
    let good_path = dir.path().join("good.csv");
    fs::write(&good_path, good.to_csv()).unwrap();
    let o = harvest(&["identify", good_path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(
        s.contains("mean delta = 7.99") || s.contains("mean delta = 8.00"),
        "{s}"
    );

    // Voltage axis stops at half the optimum, so the peak sits on its edge.
    let cut = synthetic_surface(&h, 1.0, &Axis::linear(0.0, 2.0, 21), &phi, 0.0, 1).unwrap();
    let cut_path = dir.path().join("cut.csv");
    fs::write(&cut_path, cut.to_csv()).unwrap();
    let o = harvest(&["identify", cut_path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("warning:"));
}

#[test]
fn identify_without_input_is_a_config_error() {
    assert_eq!(code(&harvest(&["identify"])), 2);
}

#[test]
fn sizing_report_for_prototype_parts() {
    let o = harvest(&["--preset", "table1", "size-controller"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("R_a/R_b          137.5000"), "{s}");
    assert!(s.contains("R_e                 2564.8 ohm"), "{s}");
    assert!(s.contains("C_n                 -400.0000 nF"), "{s}");
    assert!(s.contains("hysteresis dV_T     150.0000 mV"), "{s}");
}

#[test]
fn sizing_writes_a_reusable_controller_section() {
    let dir = tempfile::tempdir().unwrap();
    let o = harvest(&["size-controller", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("controller.toml")).unwrap();
    assert!(text.lines().all(|l| l.starts_with("controller.")));
    assert!(text.contains("controller.r_a = "));
    // Feeding it back gives a switched scenario.
    let cfg = dir.path().join("controller.toml");
    let o = harvest(&[
        "--preset",
        "ppa4011",
        "--config",
        cfg.to_str().unwrap(),
        "analyze",
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn sizing_failures_exit_with_sizing_code() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "f.toml", "sizing.fixed.r_m = 20.0\n");
    let o = harvest(&["--preset", "ppa4011", "--config", &c, "size-controller"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("capacitance relation"));

    // Prototype parts are close to, not exactly at, the optimum.
    let o = harvest(&["--preset", "table1", "size-controller", "--tolerance", "0"]);
    assert_eq!(code(&o), 4);
}
