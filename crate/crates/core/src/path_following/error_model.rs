use std::ops::Range;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::nominal::{NominalPath, RefPoint};
use crate::error::{Error, Result};
use crate::vehicle_model::{c1, velocity_ratio, wrap_angle, Direction, VehicleParams, VehicleState, MIN_VELOCITY_RATIO};

/// Frenet-frame path-following error of the semitrailer axle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathFollowingError {
    pub z3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
    pub s_tilde: f64,
}

impl PathFollowingError {
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.z3, self.theta3, self.beta3, self.beta2)
    }
}

/// Heading and joint-angle rates per unit of semitrailer travel.
#[inline]
fn per_trailer_distance(beta3: f64, beta2: f64, kappa: f64, p: &VehicleParams) -> [f64; 3] {
    let (sb2, cb2) = beta2.sin_cos();
    let g = beta3.cos() * c1(beta2, kappa, p);
    let tb3 = beta3.tan() / p.l3;
    [
        tb3,
        (sb2 - p.m1 * cb2 * kappa) / (p.l2 * g) - tb3,
        (kappa - sb2 / p.l2 + p.m1 * cb2 * kappa / p.l2) / g,
    ]
}

/// Time derivatives `(ds~/dt, dx~e/dt)` for tractor speed `v`
/// (its sign must match the nominal direction).
pub fn error_dynamics(
    xe: &Vector4<f64>,
    kappa_tilde: f64,
    r: &RefPoint,
    v: f64,
    p: &VehicleParams,
) -> Result<(f64, Vector4<f64>)> {
    let beta3 = xe[2] + r.beta3;
    let beta2 = xe[3] + r.beta2;
    let kappa = kappa_tilde + r.kappa;
    let gv = velocity_ratio(beta2, beta3, kappa, p);
    if gv <= MIN_VELOCITY_RATIO {
        return Err(Error::Singular(format!("velocity ratio {gv:.3e}")));
    }
    let gvr = velocity_ratio(r.beta2, r.beta3, r.kappa, p);
    if gvr <= MIN_VELOCITY_RATIO {
        return Err(Error::Singular("nominal velocity ratio".into()));
    }
    let kappa3r = r.beta3.tan() / p.l3;
    let den = 1.0 - kappa3r * xe[0];
    if den <= 0.0 {
        return Err(Error::Singular("outside the validity tube".into()));
    }
    let v3 = v * gv;
    let sigma = xe[1].cos() / den;
    let act = per_trailer_distance(beta3, beta2, kappa, p);
    let nom = per_trailer_distance(r.beta3, r.beta2, r.kappa, p);
    let s_dot = v3 * r.v_r.sign() * sigma;
    let d = Vector4::new(
        v3 * xe[1].sin(),
        v3 * (act[0] - sigma * nom[0]),
        v3 * (act[1] - sigma * nom[1]),
        v3 * (act[2] - sigma * nom[2]),
    );
    Ok((s_dot, d))
}

/// Project the semitrailer axle onto the polyline of the nominal path,
/// searching `[hint, hint + window]` in `s_tilde` within one direction segment.
/// Linear interpolation makes the per-segment minimiser closed form.
pub fn project(x: &VehicleState, path: &NominalPath, range: Range<usize>, hint: f64, window: f64) -> f64 {
    let sm = &path.samples[range];
    if sm.len() < 2 {
        return sm.first().map_or(hint, |s| s.s_tilde);
    }
    let lo = hint.max(sm[0].s_tilde);
    let hi = (hint + window).min(sm[sm.len() - 1].s_tilde);
    if lo >= hi {
        return lo.min(sm[sm.len() - 1].s_tilde);
    }
    let k0 = sm.partition_point(|p| p.s_tilde <= lo).clamp(1, sm.len() - 1) - 1;
    let mut best = (f64::INFINITY, lo);
    for k in k0..sm.len() - 1 {
        let (a, b) = (&sm[k], &sm[k + 1]);
        if a.s_tilde > hi {
            break;
        }
        let (ax, ay) = (a.state.state.x3, a.state.state.y3);
        let (dx, dy) = (b.state.state.x3 - ax, b.state.state.y3 - ay);
        let len2 = dx * dx + dy * dy;
        let ds = b.s_tilde - a.s_tilde;
        // Clamp the parameter to the part of this segment inside the window.
        let t_lo = if ds > 0.0 { ((lo - a.s_tilde) / ds).max(0.0) } else { 0.0 };
        let t_hi = if ds > 0.0 { ((hi - a.s_tilde) / ds).min(1.0) } else { 0.0 };
        if t_lo > t_hi {
            continue;
        }
        let t = if len2 > 0.0 { ((x.x3 - ax) * dx + (x.y3 - ay) * dy) / len2 } else { 0.0 };
        let t = t.clamp(t_lo, t_hi);
        let (px, py) = (ax + t * dx - x.x3, ay + t * dy - x.y3);
        let d2 = px * px + py * py;
        // Strict improvement beyond 1 mm^2 keeps the earlier (nearer-hint) candidate on ties.
        if d2 < best.0 - 1e-6 {
            best = (d2, a.s_tilde + t * ds);
        }
    }
    best.1
}

/// Error state of `x` relative to the nominal point at `s_tilde`.
pub fn compute_error(x: &VehicleState, r: &RefPoint, p: &VehicleParams) -> Result<PathFollowingError> {
    let (s, c) = r.theta3.sin_cos();
    let z3 = -(x.x3 - r.x3) * s + (x.y3 - r.y3) * c;
    let kappa3r = r.beta3.tan() / p.l3;
    if kappa3r * z3 >= 1.0 {
        return Err(Error::TubeViolation { s: r.s_tilde, z3 });
    }
    Ok(PathFollowingError {
        z3,
        theta3: wrap_angle(x.theta3 - r.theta3),
        beta3: x.beta3 - r.beta3,
        beta2: x.beta2 - r.beta2,
        s_tilde: r.s_tilde,
    })
}

/// Jacobians of the error dynamics (unit speed in the nominal direction) at the origin.
pub fn linearize(r: &RefPoint, p: &VehicleParams) -> Result<(Matrix4<f64>, Vector4<f64>)> {
    let v = r.v_r.sign();
    let h = 1e-6;
    let mut a = Matrix4::zeros();
    for j in 0..4 {
        let mut e = Vector4::zeros();
        e[j] = h;
        let (_, fp) = error_dynamics(&e, 0.0, r, v, p)?;
        let (_, fm) = error_dynamics(&(-e), 0.0, r, v, p)?;
        a.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    let (_, fp) = error_dynamics(&Vector4::zeros(), h, r, v, p)?;
    let (_, fm) = error_dynamics(&Vector4::zeros(), -h, r, v, p)?;
    Ok((a, (fp - fm) / (2.0 * h)))
}

/// Analytic straight-line linearisation for forward motion at unit speed.
pub fn straight_line_matrices(p: &VehicleParams) -> (Matrix4<f64>, Vector4<f64>) {
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0 / p.l3, 0.0,
        0.0, 0.0, -1.0 / p.l3, 1.0 / p.l2,
        0.0, 0.0, 0.0, -1.0 / p.l2,
    );
    let b = Vector4::new(0.0, 0.0, -p.m1 / p.l2, (p.l2 + p.m1) / p.l2);
    (a, b)
}

/// Straight nominal point in direction `dir`.
pub fn straight_ref(dir: Direction) -> RefPoint {
    RefPoint { s_tilde: 0.0, x3: 0.0, y3: 0.0, theta3: 0.0, beta3: 0.0, beta2: 0.0, alpha: 0.0, kappa: 0.0, v_r: dir }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Complex, DMatrix};

    fn p() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn origin_is_equilibrium() {
        let pp = p();
        for alpha in [-0.3, 0.0, 0.1] {
            let (b3, b2) = crate::vehicle_model::equilibrium_angles(alpha, &pp).unwrap();
            for dir in [Direction::Forward, Direction::Backward] {
                let r = RefPoint { beta3: b3, beta2: b2, alpha, kappa: f64::tan(alpha) / pp.l1, v_r: dir, ..straight_ref(dir) };
                let (sd, d) = error_dynamics(&Vector4::zeros(), 0.0, &r, dir.sign(), &pp).unwrap();
                assert!(d.amax() < 1e-15);
                assert!(sd > 0.0);
            }
        }
    }

    #[test]
    fn straight_line_jacobian_matches_analytic() {
        let pp = p();
        let (a0, b0) = straight_line_matrices(&pp);
        for dir in [Direction::Forward, Direction::Backward] {
            let (a, b) = linearize(&straight_ref(dir), &pp).unwrap();
            assert!((a - a0 * dir.sign()).amax() < 1e-6);
            assert!((b - b0 * dir.sign()).amax() < 1e-6);
        }
        assert!((a0[(1, 2)] - 0.125).abs() < 1e-12);
        assert!((b0[2] + 0.42894).abs() < 1e-5 && (b0[3] - 1.42894).abs() < 1e-5);
    }

    #[test]
    fn small_errors_follow_linearisation() {
        use rand::{Rng, SeedableRng};
        let pp = p();
        let (a0, b0) = straight_line_matrices(&pp);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let xe = Vector4::from_fn(|_, _| rng.gen_range(-1e-3..1e-3));
            let k = rng.gen_range(-1e-3..1e-3);
            let (_, d) = error_dynamics(&xe, k, &straight_ref(Direction::Forward), 1.0, &pp).unwrap();
            let lin = a0 * xe + b0 * k;
            assert!((d - lin).norm() < 1e-3 * xe.norm());
        }
    }

    #[test]
    fn straight_line_eigenvalues() {
        let (a, _) = straight_line_matrices(&p());
        let mut e: Vec<f64> = a.complex_eigenvalues().iter().map(|c: &Complex<f64>| c.re).collect();
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((e[0] + 1.0 / 3.87).abs() < 1e-10);
        assert!((e[1] + 0.125).abs() < 1e-10);
        assert!(e[2].abs() < 1e-10 && e[3].abs() < 1e-10);
    }

    #[test]
    fn transfer_zero_at_v_over_m1() {
        // Rosenbrock matrix [sI - A, -B; C, 0] loses rank at the invariant zero.
        let pp = p();
        for v in [1.0, -1.0] {
            let (a, b) = straight_line_matrices(&pp);
            let (a, b) = (a * v, b * v);
            let rosen = |s: f64| {
                let mut m = DMatrix::<f64>::zeros(5, 5);
                for i in 0..4 {
                    for j in 0..4 {
                        m[(i, j)] = (if i == j { s } else { 0.0 }) - a[(i, j)];
                    }
                    m[(i, 4)] = -b[i];
                }
                m[(4, 0)] = 1.0;
                m.singular_values().min()
            };
            assert!(rosen(v / pp.m1) < 1e-12);
            assert!(rosen(v / pp.m1 + 0.3) > 1e-3);
        }
    }

    #[test]
    fn left_offset_is_positive() {
        let r = straight_ref(Direction::Forward);
        let x = VehicleState::new(2.0, 0.4, 0.0, 0.0, 0.0);
        let e = compute_error(&x, &r, &p()).unwrap();
        assert!((e.z3 - 0.4).abs() < 1e-15 && e.theta3 == 0.0);
    }
}
