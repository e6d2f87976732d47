use g2t_core::path_following::{straight_nominal, NominalPath};
use g2t_core::simulator::*;
use g2t_core::{Direction, VehicleParams};

fn figure_eight(d: Direction) -> PlanSource {
    PlanSource::FigureEight { direction: d, config: FigureEightConfig::default() }
}

fn straight(len: f64, d: Direction) -> NominalPath {
    straight_nominal(len, d, 0.05, &VehicleParams::default()).unwrap()
}

#[test]
fn zero_error_with_true_state_tracks_within_a_millimetre() {
    for d in [Direction::Backward, Direction::Forward] {
        let sc = Scenario { plan: figure_eight(d), estimator: Estimator::Truth, ..Default::default() };
        let o = run(&sc).unwrap();
        assert!(o.succeeded(), "{:?}", o.failure);
        assert!(o.metrics.max_abs_true_z3 < 1e-3, "{d:?}: {}", o.metrics.max_abs_true_z3);
        assert!(o.metrics.s_tilde_increasing);
        assert_eq!(o.metrics.progress, 1.0);
    }
}

#[test]
fn zero_error_with_filter_in_the_loop_stays_close() {
    let sc = Scenario { plan: figure_eight(Direction::Backward), ..Default::default() };
    let o = run(&sc).unwrap();
    assert!(o.succeeded());
    assert!(o.metrics.max_abs_true_z3 < 1e-2, "{}", o.metrics.max_abs_true_z3);
    assert!(o.metrics.max_position_error < 2e-2);
}

#[test]
fn straight_line_keeps_angles_exactly_zero() {
    let p = VehicleParams::default();
    for d in [Direction::Backward, Direction::Forward] {
        let path = straight(30.0, d);
        for est in [Estimator::Truth, Estimator::Ekf] {
            let sc = Scenario { estimator: est, ..Default::default() };
            let o = run_on_path(&sc, &path, &p).unwrap();
            assert!(o.succeeded());
            for r in &o.trace {
                assert_eq!((r.theta3, r.beta3, r.beta2, r.y3), (0.0, 0.0, 0.0, 0.0));
                assert_eq!(r.kappa, 0.0);
            }
        }
    }
}

#[test]
fn command_changes_only_on_controller_ticks() {
    let sc = Scenario {
        plan: figure_eight(Direction::Backward),
        initial_error: [0.5, 0.0, 0.05, -0.05],
        duration_cap: 30.0,
        ..Default::default()
    };
    let o = run(&sc).unwrap();
    assert_eq!(o.failure.as_ref().map(|f| f.kind), Some(FailureKind::Timeout));
    for (i, w) in o.trace.windows(2).enumerate() {
        let tick = (i + 1) % 20 == 0;
        assert_eq!(w[1].events & event::CONTROL != 0, tick, "row {}", i + 1);
        if !tick {
            assert_eq!(w[0].kappa, w[1].kappa);
        }
    }
}

#[test]
fn noisy_runs_are_bit_reproducible() {
    let p = VehicleParams::default();
    let path = straight(15.0, Direction::Backward);
    let mut sc = Scenario { seed: 7, initial_error: [0.3, 0.02, 0.0, 0.0], ..Default::default() };
    sc.disturbance.mode = MeasurementMode::Lidar;
    sc.disturbance.outliers = 0.2;
    let csv = |sc: &Scenario| {
        let mut buf = Vec::new();
        write_trace(&run_on_path(sc, &path, &p).unwrap().trace, &mut buf).unwrap();
        buf
    };
    let a = csv(&sc);
    assert_eq!(a, csv(&sc));
    sc.seed = 8;
    assert_ne!(a, csv(&sc));
}

#[test]
fn metrics_survive_the_csv_round_trip() {
    let mut sc = Scenario { plan: figure_eight(Direction::Forward), duration_cap: 40.0, seed: 3, ..Default::default() };
    sc.disturbance.mode = MeasurementMode::Gaussian;
    let o = run(&sc).unwrap();
    let mut buf = Vec::new();
    write_trace(&o.trace, &mut buf).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back, o.trace);
    assert_eq!(compute_metrics(&back, o.s_range, sc.settle_tol), o.metrics);
}

#[test]
fn failures_are_labelled() {
    let p = VehicleParams::default();
    let path = straight(40.0, Direction::Backward);
    let kind = |sc: Scenario| run_on_path(&sc, &path, &p).unwrap().failure.map(|f| f.kind);
    let base = Scenario { estimator: Estimator::Truth, ..Default::default() };
    assert_eq!(kind(Scenario { initial_error: [11.0, 0.0, 0.0, 0.0], ..base.clone() }), Some(FailureKind::Runaway));
    assert_eq!(kind(Scenario { initial_error: [0.0, 0.0, 1.4, 0.0], ..base.clone() }), Some(FailureKind::JackKnife));
    assert_eq!(kind(Scenario { duration_cap: 5.0, ..base.clone() }), Some(FailureKind::Timeout));
    let arc = NominalPath::from_sampled(
        &g2t_core::vehicle_model::integrate(
            &g2t_core::vehicle_model::equilibrium_state(0.0, 0.0, 0.0, 0.2, &p).unwrap(),
            &g2t_core::ControlProfile::constant(Direction::Forward, 0.0, 20.0),
            0.05,
            &p,
        )
        .unwrap(),
        &p,
        -1,
        0.0,
        0.0,
    );
    // Starting beyond the turning centre of the semitrailer path leaves the tube.
    let r3 = p.l3 / arc.samples[0].state.state.beta3.tan();
    let sc = Scenario { initial_error: [1.5 * r3, 0.0, 0.0, 0.0], ..base };
    assert_eq!(run_on_path(&sc, &arc, &p).unwrap().failure.map(|f| f.kind), Some(FailureKind::Tube));
}

#[test]
fn scenario_json_round_trips_and_validates() {
    let mut sc = Scenario { name: "x".into(), seed: 5, ..Default::default() };
    sc.disturbance.mode = MeasurementMode::Lidar;
    let back = Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap();
    assert_eq!(back, sc);
    let minimal = Scenario::from_json(r#"{"plan": {"file": {"path": "plan.csv"}}, "seed": 2}"#).unwrap();
    assert_eq!(minimal.filter, Scenario::default().filter);
    assert!(Scenario::from_json(r#"{"speeds": {"forward": 1.0, "backward": 0.8}}"#).is_err());
    assert!(Scenario::from_json(r#"{"plant_hz": 1000.0, "filter": {"w_diag": [0.001, 0.001], "loc_diag": [0.001, 0.001, 0.0005], "ran_diag": [0.0005, 0.0001], "x0_diag": [0.5, 0.5, 0.05, 0.05, 0.05], "ekf_hz": 300.0, "loc_hz": 100.0, "ran_hz": 20.0, "ctrl_hz": 50.0}}"#).is_err());
}

#[test]
fn bench_is_ordered_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.csv");
    straight(10.0, Direction::Backward).write_csv(std::fs::File::create(&plan).unwrap()).unwrap();
    let mut sc = Scenario { plan: PlanSource::File { path: plan }, initial_error: [0.2, 0.0, 0.0, 0.0], ..Default::default() };
    sc.disturbance.mode = MeasurementMode::Gaussian;
    let a = bench(std::slice::from_ref(&sc), 4, 10, 4).unwrap();
    let b = bench(std::slice::from_ref(&sc), 4, 10, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
    let single = run(&Scenario { seed: 12, ..sc }).unwrap();
    assert_eq!(a.runs[2].metrics, single.metrics);
}
