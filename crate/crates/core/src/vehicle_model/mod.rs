//! Kinematic model of the general 2-trailer with a car-like tractor.
//!
//! Position and heading are those of the semitrailer axle midpoint. The
//! joint angles are `beta3` (semitrailer relative to dolly) and `beta2`
//! (dolly relative to tractor). Steering enters through the tractor
//! curvature `kappa = tan(alpha) / L1`.

mod params;

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector5;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::VehicleParams;

/// Below this semitrailer-to-tractor speed ratio the model is treated as
/// uncontrollable.
pub const MIN_VELOCITY_RATIO: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x3: f64,
    pub y3: f64,
    pub theta3: f64,
    pub beta3: f64,
    pub beta2: f64,
}

impl VehicleState {
    pub fn new(x3: f64, y3: f64, theta3: f64, beta3: f64, beta2: f64) -> Self {
        Self { x3, y3, theta3, beta3, beta2 }
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.x3, self.y3, self.theta3, self.beta3, self.beta2)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    /// Tractor heading.
    pub fn theta1(&self) -> f64 {
        self.theta3 + self.beta3 + self.beta2
    }
}

/// Vehicle state extended with the steering angle and its rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub state: VehicleState,
    pub alpha: f64,
    pub omega: f64,
}

impl AugmentedState {
    pub fn new(state: VehicleState, alpha: f64, omega: f64) -> Self {
        Self { state, alpha, omega }
    }

    pub fn to_array(&self) -> [f64; 7] {
        let q = &self.state;
        [q.x3, q.y3, q.theta3, q.beta3, q.beta2, self.alpha, self.omega]
    }

    pub fn from_array(a: &[f64; 7]) -> Self {
        Self::new(VehicleState::new(a[0], a[1], a[2], a[3], a[4]), a[5], a[6])
    }

    pub fn kappa(&self, params: &VehicleParams) -> f64 {
        self.alpha.tan() / params.l1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Planning-time input: motion direction at unit speed and steering acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningControl {
    pub v: Direction,
    pub u_omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    pub length: f64,
    pub control: PlanningControl,
}

/// Piecewise-constant planning input over tractor path length.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    pub segments: Vec<ControlSegment>,
}

impl ControlProfile {
    pub fn constant(v: Direction, u_omega: f64, length: f64) -> Self {
        Self { segments: vec![ControlSegment { length, control: PlanningControl { v, u_omega } }] }
    }

    pub fn push(&mut self, v: Direction, u_omega: f64, length: f64) {
        self.segments.push(ControlSegment { length, control: PlanningControl { v, u_omega } });
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

/// A path sampled in tractor path length. `controls[i]` acts on `[s[i], s[i+1]]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub s: Vec<f64>,
    pub states: Vec<AugmentedState>,
    pub controls: Vec<PlanningControl>,
}

impl SampledPath {
    pub fn length(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> &AugmentedState {
        self.states.last().expect("empty path")
    }
}

pub fn c1(beta2: f64, kappa: f64, params: &VehicleParams) -> f64 {
    beta2.cos() + params.m1 * beta2.sin() * kappa
}

/// Semitrailer speed divided by tractor speed.
pub fn velocity_ratio(beta2: f64, beta3: f64, kappa: f64, params: &VehicleParams) -> f64 {
    beta3.cos() * c1(beta2, kappa, params)
}

/// Raw model right-hand side for tractor speed `v`; no precondition checks.
#[inline]
pub(crate) fn rates(x: &[f64; 5], v: f64, kappa: f64, p: &VehicleParams) -> [f64; 5] {
    let (sb3, cb3) = x[3].sin_cos();
    let (sb2, cb2) = x[4].sin_cos();
    let c1 = cb2 + p.m1 * sb2 * kappa;
    let gv = cb3 * c1;
    let th3dot = v * sb3 * c1 / p.l3;
    [
        v * gv * x[2].cos(),
        v * gv * x[2].sin(),
        th3dot,
        v * ((sb2 - p.m1 * cb2 * kappa) / p.l2) - th3dot,
        v * (kappa - sb2 / p.l2 + p.m1 * cb2 * kappa / p.l2),
    ]
}

/// Time (or path-length, for `|v| = 1`) derivative of the vehicle state.
pub fn state_derivative(x: &VehicleState, v: f64, kappa: f64, params: &VehicleParams) -> Result<Vector5<f64>> {
    let gv = velocity_ratio(x.beta2, x.beta3, kappa, params);
    if gv <= MIN_VELOCITY_RATIO {
        return Err(Error::Uncontrollable(format!("velocity ratio {gv:.3e}")));
    }
    let a = [x.x3, x.y3, x.theta3, x.beta3, x.beta2];
    Ok(Vector5::from(rates(&a, v, kappa, params)))
}

/// Joint angles at which a constant steering angle keeps the vehicle in a
/// circular steady state.
pub fn equilibrium_angles(alpha_e: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !alpha_e.is_finite() || alpha_e.abs() >= params.alpha_max {
        return Err(Error::Domain(format!("|alpha_e| = {:.4} not below alpha_max", alpha_e.abs())));
    }
    if alpha_e == 0.0 {
        return Ok((0.0, 0.0));
    }
    let r1 = params.l1 / alpha_e.tan().abs();
    let r2_sq = r1 * r1 + params.m1 * params.m1 - params.l2 * params.l2;
    if r2_sq <= 0.0 {
        return Err(Error::Domain("dolly turning radius is imaginary".into()));
    }
    let r2 = r2_sq.sqrt();
    let r3_sq = r2_sq - params.l3 * params.l3;
    if r3_sq <= 0.0 {
        return Err(Error::Domain("semitrailer turning radius is imaginary".into()));
    }
    let r3 = r3_sq.sqrt();
    let sg = alpha_e.signum();
    let beta3 = sg * (params.l3 / r3).atan();
    let beta2 = sg * ((params.m1 / r1).atan() + (params.l2 / r2).atan());
    Ok((beta3, beta2))
}

/// Augmented state resting at the equilibrium of steering angle `alpha`.
pub fn equilibrium_state(x3: f64, y3: f64, theta3: f64, alpha: f64, params: &VehicleParams) -> Result<AugmentedState> {
    let (b3, b2) = equilibrium_angles(alpha, params)?;
    Ok(AugmentedState::new(VehicleState::new(x3, y3, theta3, b3, b2), alpha, 0.0))
}

/// Why `z` lies outside the admissible set, if it does.
pub fn membership_violation(z: &AugmentedState, params: &VehicleParams) -> Option<String> {
    const TOL: f64 = 1e-9;
    let q = &z.state;
    if q.beta3.abs() >= FRAC_PI_2 {
        return Some(format!("|beta3| = {:.4}", q.beta3.abs()));
    }
    if q.beta2.abs() >= FRAC_PI_2 {
        return Some(format!("|beta2| = {:.4}", q.beta2.abs()));
    }
    if z.alpha.abs() > params.alpha_max + TOL {
        return Some(format!("|alpha| = {:.4}", z.alpha.abs()));
    }
    if z.omega.abs() > params.omega_max + TOL {
        return Some(format!("|omega| = {:.4}", z.omega.abs()));
    }
    if velocity_ratio(q.beta2, q.beta3, z.kappa(params), params) <= MIN_VELOCITY_RATIO {
        return Some("velocity ratio not positive".into());
    }
    None
}

#[inline]
pub(crate) fn aug_rates(z: &[f64; 7], v: f64, u: f64, p: &VehicleParams) -> [f64; 7] {
    let kappa = z[5].tan() / p.l1;
    let r = rates(&[z[0], z[1], z[2], z[3], z[4]], v, kappa, p);
    [r[0], r[1], r[2], r[3], r[4], z[6], u]
}

/// One classical RK4 step of length `h` in tractor path length.
#[inline]
pub(crate) fn rk4_step(z: &[f64; 7], v: f64, u: f64, h: f64, p: &VehicleParams) -> [f64; 7] {
    let add = |a: &[f64; 7], k: &[f64; 7], c: f64| {
        let mut o = *a;
        for i in 0..7 {
            o[i] += c * k[i];
        }
        o
    };
    let k1 = aug_rates(z, v, u, p);
    let k2 = aug_rates(&add(z, &k1, 0.5 * h), v, u, p);
    let k3 = aug_rates(&add(z, &k2, 0.5 * h), v, u, p);
    let k4 = aug_rates(&add(z, &k3, h), v, u, p);
    let mut o = *z;
    for i in 0..7 {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Integrate the augmented model over a piecewise-constant control profile
/// with RK4 steps of at most `ds`. Fails on leaving the admissible set.
pub fn integrate(z0: &AugmentedState, profile: &ControlProfile, ds: f64, params: &VehicleParams) -> Result<SampledPath> {
    if !(ds > 0.0) {
        return Err(Error::InvalidParameter("ds must be positive".into()));
    }
    if let Some(reason) = membership_violation(z0, params) {
        return Err(Error::StateSpaceViolation { s: 0.0, reason });
    }
    let mut path = SampledPath { s: vec![0.0], states: vec![*z0], controls: Vec::new() };
    let mut z = z0.to_array();
    let mut s = 0.0;
    for seg in &profile.segments {
        if seg.length < 0.0 {
            return Err(Error::InvalidParameter("negative segment length".into()));
        }
        let n = (seg.length / ds - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            continue;
        }
        let h = seg.length / n as f64;
        let v = seg.control.v.sign();
        for _ in 0..n {
            z = rk4_step(&z, v, seg.control.u_omega, h, params);
            s += h;
            let za = AugmentedState::from_array(&z);
            if let Some(reason) = membership_violation(&za, params) {
                return Err(Error::StateSpaceViolation { s, reason });
            }
            path.s.push(s);
            path.states.push(za);
            path.controls.push(seg.control);
        }
    }
    Ok(path)
}

/// Time-reversal of a planned path: the same geometric path traversed in
/// the opposite direction, with steering rate negated.
pub fn reverse_path(path: &SampledPath) -> SampledPath {
    let total = path.length();
    let s = path.s.iter().rev().map(|si| total - si).collect();
    let states = path
        .states
        .iter()
        .rev()
        .map(|z| AugmentedState { omega: -z.omega, ..*z })
        .collect();
    let controls = path
        .controls
        .iter()
        .rev()
        .map(|c| PlanningControl { v: c.v.opposite(), u_omega: c.u_omega })
        .collect();
    SampledPath { s, states, controls }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn straight_line_rates() {
        let x = VehicleState::default();
        let d = state_derivative(&x, 1.0, 0.0, &p()).unwrap();
        assert_abs_diff_eq!(d, Vector5::new(1.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
        let d = state_derivative(&x, -1.0, 0.0, &p()).unwrap();
        assert_abs_diff_eq!(d, Vector5::new(-1.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn uncontrollable_when_ratio_vanishes() {
        let x = VehicleState::new(0.0, 0.0, 0.0, FRAC_PI_2, 0.0);
        assert!(matches!(state_derivative(&x, 1.0, 0.0, &p()), Err(Error::Uncontrollable(_))));
    }

    #[test]
    fn equilibrium_is_stationary() {
        for a in [-0.3, -0.1, 0.05, 0.2, 0.4] {
            let (b3, b2) = equilibrium_angles(a, &p()).unwrap();
            let x = VehicleState::new(0.0, 0.0, 0.3, b3, b2);
            let d = state_derivative(&x, 1.0, a.tan() / p().l1, &p()).unwrap();
            assert!(d[3].abs() < 1e-12 && d[4].abs() < 1e-12, "alpha {a}: {d:?}");
        }
    }

    #[test]
    fn equilibrium_domain() {
        assert_eq!(equilibrium_angles(0.0, &p()).unwrap(), (0.0, 0.0));
        assert!(matches!(equilibrium_angles(p().alpha_max, &p()), Err(Error::Domain(_))));
        assert!(matches!(equilibrium_angles(0.6, &p()), Err(Error::Domain(_))));
    }

    #[test]
    fn equilibrium_matches_circle_geometry() {
        // Independent check: on the steady circle the semitrailer axle radius R3
        // and the kingpin radius R2 satisfy R2^2 = R3^2 + L3^2.
        let pp = p();
        let a: f64 = 0.15;
        let (b3, _) = equilibrium_angles(a, &pp).unwrap();
        let r1 = pp.l1 / a.tan();
        let r2 = (r1 * r1 + pp.m1 * pp.m1 - pp.l2 * pp.l2).sqrt();
        let r3 = pp.l3 / b3.tan();
        assert_abs_diff_eq!(r3 * r3 + pp.l3 * pp.l3, r2 * r2, epsilon = 1e-9);
    }

    #[test]
    fn integrate_straight_is_exact() {
        let z0 = AugmentedState::default();
        let path = integrate(&z0, &ControlProfile::constant(Direction::Backward, 0.0, 5.0), 0.01, &p()).unwrap();
        assert_eq!(path.states.len(), 501);
        assert_abs_diff_eq!(path.last().state.x3, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path.length(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_reports_violation() {
        let z0 = AugmentedState::default();
        let e = integrate(&z0, &ControlProfile::constant(Direction::Forward, 10.0, 5.0), 0.01, &p()).unwrap_err();
        assert!(matches!(e, Error::StateSpaceViolation { .. }));
    }

    #[test]
    fn wrap() {
        assert_abs_diff_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn reverse_is_involution_and_replays(u1 in -0.01f64..0.01, u2 in -0.01f64..0.01, l in 1.0f64..4.0,
                                             back in proptest::bool::ANY) {
            let dir = if back { Direction::Backward } else { Direction::Forward };
            let mut prof = ControlProfile::default();
            prof.push(dir, u1, l);
            prof.push(dir, u2, l);
            let z0 = AugmentedState::default();
            let path = integrate(&z0, &prof, 0.01, &p()).unwrap();
            let rev = reverse_path(&path);
            let back = reverse_path(&rev);
            prop_assert_eq!(&back.states, &path.states);
            prop_assert_eq!(&back.controls, &path.controls);
            for (a, b) in back.s.iter().zip(&path.s) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // Replaying the reversed controls from the reversed start reproduces the reversed path.
            let mut rprof = ControlProfile::default();
            rprof.push(dir.opposite(), u2, l);
            rprof.push(dir.opposite(), u1, l);
            let replay = integrate(&rev.states[0], &rprof, 0.01, &p()).unwrap();
            let end = replay.last().to_array();
            let want = z0.to_array();
            for i in 0..7 {
                prop_assert!((end[i] - want[i]).abs() < 1e-6, "component {} off by {}", i, end[i] - want[i]);
            }
        }
    }
}
