use g2t_core::observer::{
    add_outliers, h_loc, h_ran, initial_state, iterative_ransac, simulate_point_cloud, EkfState, LidarConfig,
    NoiseConfig, RansacConfig, UpdateOutcome,
};
use g2t_core::{VehicleParams, VehicleState};
use nalgebra::Vector5;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_joints(rng: &mut impl Rng) -> VehicleState {
    VehicleState::new(
        rng.gen_range(-30.0..30.0),
        rng.gen_range(-30.0..30.0),
        rng.gen_range(-3.1..3.1),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    )
}

#[test]
fn initialisation_inverts_measurements() {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let s = random_joints(&mut rng);
        let x = s.to_vector();
        let est = initial_state(&h_loc(&x, &p), &h_ran(&x, &p), &p).unwrap().to_vector();
        let mut d = est - x;
        d[2] = g2t_core::vehicle_model::wrap_angle(d[2]);
        assert!(d.amax() < 1e-9, "{d:?}");
    }
}

#[test]
fn straight_drive_prediction() {
    let p = VehicleParams::default();
    let n = NoiseConfig::default();
    let y = h_loc(&Vector5::zeros(), &p);
    let mut e = EkfState::initialize(&y, &nalgebra::Vector2::zeros(), &n, &p).unwrap();
    let x0 = e.mean.to_vector();
    e.predict(1.0, 0.0, 0.01, &n, &p).unwrap();
    let d = e.mean.to_vector() - x0;
    assert!((d[0] - 0.01).abs() < 1e-15 && d.rows(1, 4).amax() < 1e-15);
}

#[test]
fn lidar_update_reduces_joint_error() {
    let p = VehicleParams::default();
    let n = NoiseConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let s = random_joints(&mut rng);
        let x = s.to_vector();
        let mut e = EkfState::initialize(&h_loc(&x, &p), &h_ran(&x, &p), &n, &p).unwrap();
        let mut m = e.mean.to_vector();
        m[3] += 0.02;
        m[4] -= 0.015;
        e.mean = VehicleState::from_vector(&m);
        let before = (m - x).rows(3, 2).norm();
        assert_eq!(e.update_ran(&h_ran(&x, &p), &n, &p), UpdateOutcome::Accepted);
        let after = (e.mean.to_vector() - x).rows(3, 2).norm();
        assert!(after < before, "{after} >= {before}");
    }
}

#[test]
fn covariance_stays_healthy() {
    let p = VehicleParams::default();
    let n = NoiseConfig::default();
    let x = Vector5::new(0.0, 0.0, 0.0, 0.0, 0.0);
    let mut e = EkfState::initialize(&h_loc(&x, &p), &h_ran(&x, &p), &n, &p).unwrap();
    let mut truth = x;
    let steps = 20_000;
    for k in 0..steps {
        let kappa = 0.05 * ((k as f64) * 1e-3).sin();
        truth = g2t_core::observer::predict_mean(&truth, 1.0, kappa, 0.01, &p);
        e.predict(1.0, kappa, 0.01, &n, &p).unwrap();
        e.update_loc(&h_loc(&truth, &p), &n, &p);
        if k % 5 == 0 {
            e.update_ran(&h_ran(&truth, &p), &n, &p);
        }
    }
    assert!(e.cov.symmetric_eigen().eigenvalues.min() > 0.0);
    assert!((e.floor_events as f64) <= 0.001 * steps as f64, "floor events {}", e.floor_events);
    assert!((e.mean.to_vector() - truth).amax() < 0.05);
}

#[test]
fn ransac_is_exact_on_noise_free_clouds() {
    let p = VehicleParams::default();
    let lidar = LidarConfig::default();
    let cfg = RansacConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let s = random_joints(&mut rng);
        let truth = h_ran(&s.to_vector(), &p);
        let cloud = simulate_point_cloud(&s, &p, &lidar, 0.0, &mut rng);
        let m = iterative_ransac(&cloud, &p, &lidar, &cfg, &mut rng).expect("front edge");
        worst = worst.max((m.ly - truth[0]).abs()).max((m.phi - truth[1]).abs());
    }
    assert!(worst < 1e-6, "worst {worst:e}");
}

#[test]
fn ransac_tolerates_noise_and_outliers() {
    let p = VehicleParams::default();
    let lidar = LidarConfig::default();
    let cfg = RansacConfig::default();
    let mut ly_err = Vec::new();
    let mut phi_err = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let s = random_joints(&mut rng);
        let truth = h_ran(&s.to_vector(), &p);
        let mut cloud = simulate_point_cloud(&s, &p, &lidar, 0.01, &mut rng);
        add_outliers(&mut cloud, 0.3, &lidar, 10.0, &mut rng);
        match iterative_ransac(&cloud, &p, &lidar, &cfg, &mut rng) {
            Some(m) => {
                ly_err.push((m.ly - truth[0]).abs());
                phi_err.push((m.phi - truth[1]).abs().to_degrees());
            }
            None => {
                ly_err.push(f64::INFINITY);
                phi_err.push(f64::INFINITY);
            }
        }
    }
    let p95 = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        v[94]
    };
    let (l, f) = (p95(&mut ly_err), p95(&mut phi_err));
    eprintln!("p95 |Ly err| = {l:.4} m, |phi err| = {f:.3} deg");
    assert!(l < 0.02 && f < 0.5);
}
