use harvest_core::interface::{ControllerParams, EmulatedLoad};
use harvest_core::load::{phasor_nodal_oracle, LoadSpec};
use harvest_core::sim::*;
use harvest_core::{Error, HarvesterParams};

fn rig() -> HarvesterParams {
    HarvesterParams::ppa4011()
}

fn quiet(mut cfg: SimConfig) -> SimConfig {
    cfg.record_decimation = 0;
    cfg
}

#[test]
fn matched_load_reaches_max_power() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 1.0, 0.6);
    let r = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &quiet(SimConfig::behavioral())).unwrap();
    let w = r.steady_state().unwrap();
    assert!((w.p_dc / 3.11e-3 - 1.0).abs() < 0.01, "{}", w.p_dc);
    assert!(w.balance_error() < 5e-3);
    // v_load = delta A / 2 in phase with the acceleration.
    assert!((w.v_load.norm() - 4.0).abs() < 0.01);
    assert!(w.v_load.arg().abs() < 1e-3);
}

#[test]
fn doubled_resistance_matches_closed_form() {
    let h = rig();
    let opt = h.optimal_impedance();
    let load = LoadSpec::ParallelImpedance {
        r_load: 2.0 * opt.r_opt,
        x_load: opt.x_opt,
    };
    let p = AccelProfile::constant(h.f_res, 1.0, 0.6);
    let r = simulate_behavioral(&h, load, &p, &quiet(SimConfig::behavioral())).unwrap();
    let ratio = r.avg_power() / h.max_power(1.0);
    assert!((ratio - 8.0 / 9.0).abs() < 0.01 * 8.0 / 9.0, "{ratio}");
}

#[test]
fn linear_loads_agree_with_nodal_solve() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 0.8, 0.6);
    for load in [
        LoadSpec::ParallelImpedance {
            r_load: 1000.0,
            x_load: -3000.0,
        },
        LoadSpec::ParallelImpedance {
            r_load: 8000.0,
            x_load: 1500.0,
        },
        LoadSpec::VoltageGenerator {
            v_load: 2.5,
            phi_load: -0.4,
        },
    ] {
        let r = simulate_behavioral(&h, load, &p, &quiet(SimConfig::behavioral())).unwrap();
        let oracle = phasor_nodal_oracle(&h, 0.8, &load).unwrap();
        let w = r.steady_state().unwrap();
        assert!((w.p_load / oracle.power - 1.0).abs() < 0.01, "{load:?}");
        assert!((w.v_load - oracle.v_load).norm() < 1e-3 * oracle.v_load.norm());
    }
}

#[test]
fn zero_amplitude_stays_at_rest() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 0.0, 0.05);
    let r = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &SimConfig::behavioral()).unwrap();
    assert_eq!(r.avg_power(), 0.0);
    assert!(r.traces.iter().all(|t| t.v_load == 0.0 && t.x == 0.0));
}

#[test]
fn fixed_generator_loses_a_quarter_at_double_amplitude() {
    let h = rig();
    let p = AccelProfile::step(h.f_res, 1.0, 2.0, 0.5, 1.0);
    let r = run_fixed_generator(&h, 4.0, 0.0, &p, &quiet(SimConfig::behavioral())).unwrap();
    let first = r.window_ending_at(0.5, 10).unwrap();
    assert!((first.p_load / h.max_power(1.0) - 1.0).abs() < 0.01);
    let second = r.steady_state().unwrap();
    assert!((second.p_load / h.max_power(2.0) - 0.75).abs() < 0.01);

    let p = AccelProfile::step(h.f_res, 1.0, 0.5, 0.5, 1.0);
    let r = run_fixed_generator(&h, 4.0, 0.0, &p, &quiet(SimConfig::behavioral())).unwrap();
    assert!(r.avg_power().abs() < 0.01 * h.max_power(0.5));
}

#[test]
fn settle_time_of_calibrated_step() {
    let h = rig();
    let p = AccelProfile::step(h.f_res, 0.0, 1.0, 0.02, 0.6);
    let r = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &quiet(SimConfig::behavioral())).unwrap();
    let t = r.settle_time(0.05).unwrap();
    assert!((0.05..0.2).contains(&t), "{t}");

    let flat = AccelProfile::step(h.f_res, 1.0, 1.0, 0.4, 0.6);
    let r = simulate_behavioral(
        &h,
        EmulatedLoad::matched(&h),
        &flat,
        &quiet(SimConfig::behavioral()),
    )
    .unwrap();
    assert_eq!(r.settle_time(0.05), Some(0.0));

    let none = AccelProfile::constant(h.f_res, 1.0, 0.1);
    let r = simulate_behavioral(
        &h,
        EmulatedLoad::matched(&h),
        &none,
        &quiet(SimConfig::behavioral()),
    )
    .unwrap();
    assert_eq!(r.settle_time(0.05), None);
}

#[test]
fn calibration_brackets_default_q() {
    let h = rig();
    let c = calibrate_q(&h, 0.1, 0.05, (10.0, 50.0), &SimConfig::behavioral()).unwrap();
    assert!(
        (c.q_factor - harvest_core::harvester::DEFAULT_Q).abs() < 0.1,
        "{c:?}"
    );
    assert!((c.settle_time - 0.1).abs() < 2e-3);
}

#[test]
fn overcompensating_negative_capacitance_is_rejected() {
    let h = rig();
    let load = EmulatedLoad::new(2570.0, -2.0 * h.c_p, h.omega_res());
    let p = AccelProfile::constant(h.f_res, 1.0, 0.1);
    let err = simulate_behavioral(&h, load, &p, &SimConfig::behavioral()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn zero_duration_profile_is_a_config_error() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 1.0, 0.0);
    let err = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &SimConfig::behavioral()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn traces_are_decimated_and_deterministic() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 1.0, 0.02);
    let mut cfg = SimConfig::behavioral();
    cfg.record_decimation = 100;
    let a = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &cfg).unwrap();
    let b = simulate_behavioral(&h, EmulatedLoad::matched(&h), &p, &cfg).unwrap();
    assert_eq!(a.traces_csv(), b.traces_csv());
    // The run is rounded up to whole drive periods.
    let steps = (a.periods.last().unwrap().t_end / a.dt).round() as usize;
    assert_eq!(a.traces.len(), steps.div_ceil(100));
}

#[test]
fn switched_tracks_the_emulated_load() {
    let h = rig();
    let cp = ControllerParams::prototype();
    let p = AccelProfile::constant(h.f_res, 1.0, 0.3);
    let r = simulate_switched(&h, &cp, &p, &quiet(SimConfig::switched())).unwrap();
    let w = r.steady_state().unwrap();
    assert!((w.p_dc / 2.98e-3 - 1.0).abs() < 0.1, "{}", w.p_dc);
    assert!(w.phase_lag() > 0.0);
    assert!((w.v_load.norm() / 4.0 - 1.0).abs() < 0.05);
    let sw = r.switching.unwrap();
    assert!(sw.transitions > 1000);
    // Power reaching the rails is what the terminals deliver less sense loss.
    assert!(w.p_dc < w.p_load && w.p_dc > 0.95 * w.p_load);
}

#[test]
fn dead_time_shorter_than_step_is_rejected() {
    let h = rig();
    let mut cp = ControllerParams::prototype();
    cp.dead_time = 1e-8;
    let p = AccelProfile::constant(h.f_res, 1.0, 0.01);
    let err = simulate_switched(&h, &cp, &p, &SimConfig::switched()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn pno_converges_near_optimum() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 1.0, 8.0);
    let cfg = PnoConfig {
        start_v: 2.0,
        start_phi: 0.3,
        step_v: 0.2,
        step_phi: 0.05,
        ..PnoConfig::default()
    };
    let r = run_pno_2d(&h, &p, &cfg, &quiet(SimConfig::behavioral())).unwrap();
    assert!(!r.unreliable && !r.degenerate);
    // A bounded limit cycle centred within one step of (4 V, 0).
    let tail: Vec<_> = r.trajectory.iter().rev().skip(1).take(12).collect();
    for pt in &tail {
        assert!((pt.v_load - 4.0).abs() <= 2.0 * 0.2 + 1e-9, "{pt:?}");
        assert!(pt.phi_load.abs() <= 2.0 * 0.05 + 1e-9, "{pt:?}");
    }
    let n = tail.len() as f64;
    let v_mean = tail.iter().map(|p| p.v_load).sum::<f64>() / n;
    let phi_mean = tail.iter().map(|p| p.phi_load).sum::<f64>() / n;
    assert!((v_mean - 4.0).abs() <= 0.2, "{v_mean}");
    assert!(phi_mean.abs() <= 0.05, "{phi_mean}");
}

#[test]
fn pno_degenerate_and_short_dwell_are_flagged() {
    let h = rig();
    let p = AccelProfile::constant(h.f_res, 1.0, 0.3);
    let cfg = PnoConfig {
        start_v: 3.0,
        step_v: 0.0,
        step_phi: 0.0,
        ..PnoConfig::default()
    };
    let r = run_pno_2d(&h, &p, &cfg, &quiet(SimConfig::behavioral())).unwrap();
    assert!(r.degenerate);
    assert!(r
        .trajectory
        .iter()
        .all(|pt| pt.v_load == 3.0 && pt.phi_load == 0.0));

    let short = PnoConfig {
        dwell_periods: 4,
        measure_periods: 2,
        ..PnoConfig::default()
    };
    let r = run_pno_2d(&h, &p, &short, &quiet(SimConfig::behavioral())).unwrap();
    assert!(r.unreliable);
    assert!(!r.sim.warnings.is_empty());
}
