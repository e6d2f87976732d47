use g2t_core::path_following::{
    alternating_straight_lyapunov, straight_line_matrices, straight_nominal, transition_matrix, verify_mode,
    verify_switched, HybridGains, LqWeights, ModeVerdict, SwitchVerdict,
};
use g2t_core::{Direction, VehicleParams};
use nalgebra::{Matrix4, Vector4};

fn gains() -> HybridGains {
    HybridGains::design(&VehicleParams::default(), &LqWeights::default()).unwrap()
}

#[test]
fn lq_gains_match_published_values() {
    let g = gains();
    let rev = [-0.12, 1.67, -1.58, 0.64];
    let fwd = [-0.20, -2.95, -1.65, -1.22];
    for i in 0..4 {
        assert!((g.k_rev[i] - rev[i]).abs() <= 0.01, "k_rev {i}: {}", g.k_rev[i]);
        assert!((g.k_fwd[i] - fwd[i]).abs() <= 0.01, "k_fwd {i}: {}", g.k_fwd[i]);
    }
}

#[test]
fn straight_primitives_certify() {
    let p = VehicleParams::default();
    let g = gains();
    for dir in [Direction::Forward, Direction::Backward] {
        let path = straight_nominal(5.0, dir, 0.1, &p).unwrap();
        match verify_mode(&path, &g, 0.01, &p).unwrap() {
            ModeVerdict::Certified(c) => assert!(c.residual <= 1e-9 && c.rho >= 1.0),
            v => panic!("{dir:?}: {v:?}"),
        }
    }
}

#[test]
fn flipped_gain_is_refuted() {
    let p = VehicleParams::default();
    let mut g = gains();
    g.k_rev = -g.k_rev;
    let path = straight_nominal(5.0, Direction::Backward, 0.1, &p).unwrap();
    assert!(matches!(verify_mode(&path, &g, 0.01, &p).unwrap(), ModeVerdict::Refuted(_)));
}

#[test]
fn transition_matrix_converges_in_step() {
    let p = VehicleParams::default();
    let g = gains();
    let path = straight_nominal(10.0, Direction::Backward, 0.1, &p).unwrap();
    let f: Vec<Matrix4<f64>> = [0.02, 0.01, 0.005].iter().map(|&d| transition_matrix(&path, &g, &p, d).unwrap()).collect();
    let d1 = (f[0] - f[1]).amax();
    let d2 = (f[1] - f[2]).amax();
    assert!(d2 < 1e-6 || d1 / d2 > 3.0, "d1 {d1:e} d2 {d2:e}");
    // Straight lines: error dynamics are linear in z3 and the map is close to the linearisation.
    let zero = straight_nominal(0.0, Direction::Forward, 0.1, &p).unwrap();
    assert_eq!(transition_matrix(&zero, &g, &p, 0.01).unwrap(), Matrix4::identity());
}

#[test]
fn long_forward_primitive_contracts() {
    let p = VehicleParams::default();
    let path = straight_nominal(30.0, Direction::Forward, 0.1, &p).unwrap();
    let f = transition_matrix(&path, &gains(), &p, 0.01).unwrap();
    let rho = g2t_core::linalg::spectral_radius(&nalgebra::DMatrix::from_column_slice(4, 4, f.as_slice()));
    assert!(rho < 1.0);
}

#[test]
fn alternating_long_straights_decay() {
    let p = VehicleParams::default();
    let g = gains();
    let fs: Vec<Matrix4<f64>> = [Direction::Forward, Direction::Backward]
        .iter()
        .map(|&d| transition_matrix(&straight_nominal(18.0, d, 0.1, &p).unwrap(), &g, &p, 0.01).unwrap())
        .collect();
    let cert = match verify_switched(&fs, 0.3).unwrap() {
        SwitchVerdict::Certified(c) => c,
        v => panic!("{v:?}"),
    };
    eprintln!("eta = {}", cert.eta);
    let x0 = Vector4::new(1.0, 0.1, -0.1, 0.1);
    let v = alternating_straight_lyapunov(18.0, 30, x0, &cert.s, &g, &p).unwrap();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    let v1 = alternating_straight_lyapunov(1.0, 30, x0, &cert.s, &g, &p).unwrap();
    eprintln!("1 m: {v1:?}");
    assert!(v1.iter().cloned().fold(0.0, f64::max) < 3.0 * v1[0]);
    assert!(!v1.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn opposite_closed_loops_share_no_certificate() {
    let p = VehicleParams::default();
    let g = gains();
    let (a, b) = straight_line_matrices(&p);
    let fwd = a + b * g.k_fwd;
    let bwd = -(a + b * g.k_rev);
    for set in [vec![bwd, -bwd], vec![fwd, bwd]] {
        let v = g2t_core::path_following::certify_vertices(&set, g.k_rev, -1, 0.01);
        assert!(matches!(v, ModeVerdict::Refuted(_)), "{v:?}");
    }
}
