use std::ops::Range;

use nalgebra::{Matrix4, Vector4};

use super::control::HybridGains;
use super::error_model::error_dynamics;
use super::nominal::NominalPath;
use crate::error::{Error, Result};
use crate::vehicle_model::{ControlProfile, Direction, VehicleParams, VehicleState, AugmentedState};

/// Closed-loop error trajectory in the semitrailer-distance domain.
#[derive(Clone, Debug, Default)]
pub struct DistanceTrace {
    pub s_tilde: Vec<f64>,
    /// Elapsed time at unit tractor speed.
    pub t: Vec<f64>,
    pub xe: Vec<Vector4<f64>>,
}

/// Integrate `dx~e/ds~ = f~(x~e, K x~e) / (ds~/dt)` along one direction
/// segment of `path` with RK4 steps of at most `h`. No input saturation.
pub fn simulate_distance(
    path: &NominalPath,
    range: Range<usize>,
    xe0: Vector4<f64>,
    gains: &HybridGains,
    params: &VehicleParams,
    h: f64,
) -> Result<DistanceTrace> {
    let sm = &path.samples[range.clone()];
    let (s0, s1) = (sm[0].s_tilde, sm[sm.len() - 1].s_tilde);
    let dir = sm[0].v_r;
    let k = gains.for_direction(dir);
    let rhs = |s: f64, x: &Vector4<f64>| -> Result<(Vector4<f64>, f64)> {
        let r = path.interpolate_in(range.clone(), s);
        let kt = (k * x)[0];
        let (sd, d) = error_dynamics(x, kt, &r, dir.sign(), params)?;
        if sd <= 0.0 {
            return Err(Error::Singular(format!("progression stalled at s~ = {s:.3}")));
        }
        Ok((d / sd, 1.0 / sd))
    };
    let mut tr = DistanceTrace { s_tilde: vec![s0], t: vec![0.0], xe: vec![xe0] };
    let len = s1 - s0;
    if len <= 0.0 {
        return Ok(tr);
    }
    let n = (len / h).ceil().max(1.0) as usize;
    let hh = len / n as f64;
    let (mut x, mut t) = (xe0, 0.0);
    for i in 0..n {
        let s = s0 + i as f64 * hh;
        let (k1, t1) = rhs(s, &x)?;
        let (k2, t2) = rhs(s + 0.5 * hh, &(x + k1 * (0.5 * hh)))?;
        let (k3, t3) = rhs(s + 0.5 * hh, &(x + k2 * (0.5 * hh)))?;
        let (k4, t4) = rhs(s + hh, &(x + k3 * hh))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hh / 6.0);
        t += (t1 + 2.0 * t2 + 2.0 * t3 + t4) * (hh / 6.0);
        tr.s_tilde.push(s + hh);
        tr.t.push(t);
        tr.xe.push(x);
    }
    Ok(tr)
}

/// Linearised map of the path-following error across a whole single-direction
/// path, by central differences of eight closed-loop simulations.
pub fn transition_matrix(path: &NominalPath, gains: &HybridGains, params: &VehicleParams, delta: f64) -> Result<Matrix4<f64>> {
    let range = 0..path.samples.len();
    if path.samples.len() < 2 || path.s_tilde_end() - path.samples[0].s_tilde <= 0.0 {
        return Ok(Matrix4::identity());
    }
    let mut f = Matrix4::zeros();
    for j in 0..4 {
        let mut e = Vector4::zeros();
        e[j] = delta;
        let end = |x0: Vector4<f64>| -> Result<Vector4<f64>> {
            let tr = simulate_distance(path, range.clone(), x0, gains, params, 0.01)?;
            Ok(*tr.xe.last().unwrap())
        };
        let col = (end(e)? - end(-e)?) / (2.0 * delta);
        f.set_column(j, &col);
    }
    Ok(f)
}

/// Straight nominal path of length `len` in direction `dir`, sampled every `ds`.
pub fn straight_nominal(len: f64, dir: Direction, ds: f64, params: &VehicleParams) -> Result<NominalPath> {
    let z0 = AugmentedState::new(VehicleState::default(), 0.0, 0.0);
    let path = crate::vehicle_model::integrate(&z0, &ControlProfile::constant(dir, 0.0, len), ds, params)?;
    Ok(NominalPath::from_sampled(&path, params, -1, 0.0, 0.0))
}

/// Alternate forward and backward straight segments of length `len` and
/// record `V_d = x~e^T S x~e` at every switch (the initial value included).
pub fn alternating_straight_lyapunov(
    len: f64,
    switches: usize,
    xe0: Vector4<f64>,
    s: &Matrix4<f64>,
    gains: &HybridGains,
    params: &VehicleParams,
) -> Result<Vec<f64>> {
    let fwd = straight_nominal(len, Direction::Forward, 0.1, params)?;
    let bwd = straight_nominal(len, Direction::Backward, 0.1, params)?;
    let mut x = xe0;
    let mut v = vec![(x.transpose() * s * x)[0]];
    for k in 0..switches {
        let path = if k % 2 == 0 { &fwd } else { &bwd };
        let tr = simulate_distance(path, 0..path.samples.len(), x, gains, params, 0.01)?;
        x = *tr.xe.last().unwrap();
        v.push((x.transpose() * s * x)[0]);
    }
    Ok(v)
}
