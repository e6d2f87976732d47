//! Figure-eight nominal path, recorded from the model under pure pursuit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice_planner::tractor_pose;
use crate::path_following::NominalPath;
use crate::vehicle_model::{
    membership_violation, reverse_path, rk4_step, AugmentedState, Direction, PlanningControl, SampledPath, VehicleParams, VehicleState,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureEightConfig {
    /// Radius of the two waypoint circles [m].
    pub lobe_radius: f64,
    /// Pure-pursuit lookahead distance [m].
    pub lookahead: f64,
    /// Tractor distance per recorded sample [m].
    pub step: f64,
    /// Natural frequency of the steering servo per metre travelled.
    pub servo_wn: f64,
    /// Fraction of the steering limit the lookahead law may request.
    pub steer_fraction: f64,
}

impl Default for FigureEightConfig {
    fn default() -> Self {
        Self { lobe_radius: 16.0, lookahead: 8.0, step: 0.05, servo_wn: 2.0, steer_fraction: 0.8 }
    }
}

/// Waypoint polyline: counter-clockwise circle above the origin, then clockwise below, `laps` times.
fn waypoints(r: f64, laps: usize, spacing: f64) -> Vec<(f64, f64)> {
    let n = ((std::f64::consts::TAU * r) / spacing).ceil() as usize;
    let mut out = Vec::with_capacity(2 * n * laps + 1);
    for _ in 0..laps {
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            out.push((r * a.sin(), r - r * a.cos()));
        }
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            out.push((r * a.sin(), -r + r * a.cos()));
        }
    }
    out.push((0.0, 0.0));
    out
}

struct Polyline {
    pts: Vec<(f64, f64)>,
    /// Arc length at each point.
    acc: Vec<f64>,
}

impl Polyline {
    fn new(pts: Vec<(f64, f64)>) -> Self {
        let mut acc = vec![0.0];
        for w in pts.windows(2) {
            acc.push(acc.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
        }
        Self { pts, acc }
    }

    /// Closest point at or after segment `from`, searching `window` metres ahead.
    fn closest(&self, q: (f64, f64), from: usize, window: f64) -> (usize, f64, f64) {
        let mut best = (from, self.acc[from], f64::INFINITY);
        let mut k = from;
        while k + 1 < self.pts.len() && self.acc[k] <= self.acc[from] + window {
            let (a, b) = (self.pts[k], self.pts[k + 1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let l2 = dx * dx + dy * dy;
            let t = if l2 > 0.0 { (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
            let d = (a.0 + t * dx - q.0).hypot(a.1 + t * dy - q.1);
            if d < best.2 {
                best = (k, self.acc[k] + t * l2.sqrt(), d);
            }
            k += 1;
        }
        best
    }

    fn at(&self, s: f64) -> (f64, f64) {
        let k = self.acc.partition_point(|&a| a <= s).clamp(1, self.pts.len() - 1);
        let (a, b) = (self.pts[k - 1], self.pts[k]);
        let l = self.acc[k] - self.acc[k - 1];
        let t = if l > 0.0 { ((s - self.acc[k - 1]) / l).clamp(0.0, 1.0) } else { 0.0 };
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }
}

/// Nominal figure-eight in the given direction.
pub fn make_figure_eight(p: &VehicleParams, cfg: &FigureEightConfig, dir: Direction) -> Result<NominalPath> {
    let lap = figure_eight_lap(p, cfg)?;
    let lap = match dir {
        Direction::Forward => lap,
        Direction::Backward => reverse_path(&lap),
    };
    Ok(NominalPath::from_sampled(&lap, p, -1, 0.0, 0.0))
}

/// Forward figure-eight for the semitrailer axle. The vehicle drives three laps under
/// pure pursuit; the second lap, started where the tractor passes the crossing point,
/// is returned. The backward variant is [`crate::vehicle_model::reverse_path`] of it.
pub fn figure_eight_lap(p: &VehicleParams, cfg: &FigureEightConfig) -> Result<SampledPath> {
    let r = cfg.lobe_radius;
    // Steady turning on a lobe needs a circular equilibrium at roughly this steering angle.
    let alpha_lobe = (p.l1 / r).atan();
    if !(r > cfg.lookahead) || alpha_lobe >= cfg.steer_fraction * p.alpha_max || crate::vehicle_model::equilibrium_angles(alpha_lobe, p).is_err() {
        return Err(Error::InvalidParameter(format!("lobe radius {r} m too small for the steering limit")));
    }
    let line = Polyline::new(waypoints(r, 3, 0.25));
    let lap = line.acc[line.pts.len() - 1] / 3.0;
    let x0 = VehicleState::new(-(p.l3 + p.l2 + p.m1), 0.0, 0.0, 0.0, 0.0);
    let mut z = AugmentedState::new(x0, 0.0, 0.0).to_array();
    let amax = cfg.steer_fraction * p.alpha_max;
    let (wn, h) = (cfg.servo_wn, cfg.step);
    let mut seg = 0usize;
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let mut recording = false;
    let mut travelled = 0.0;
    loop {
        let za = AugmentedState::from_array(&z);
        let (x1, y1, th1) = tractor_pose(&za.state, p);
        let (k, prog, dist) = line.closest((x1, y1), seg, 4.0 * cfg.lookahead);
        if dist > cfg.lookahead {
            return Err(Error::Divergence(format!("pure pursuit lost the waypoints ({dist:.2} m off)")));
        }
        seg = k;
        if !recording && prog >= lap {
            recording = true;
        }
        if recording && (prog >= 2.0 * lap || states.len() > 1 && travelled > 2.0 * lap) {
            states.push(za);
            break;
        }
        let (tx, ty) = line.at(prog + cfg.lookahead);
        let eta = (ty - y1).atan2(tx - x1) - th1;
        let alpha_d = (2.0 * p.l1 * eta.sin() / cfg.lookahead).atan().clamp(-amax, amax);
        let u = (wn * wn * (alpha_d - za.alpha) - 2.0 * wn * za.omega).clamp(-p.u_omega_max, p.u_omega_max);
        if recording {
            states.push(za);
            controls.push(PlanningControl { v: Direction::Forward, u_omega: u });
            travelled += h;
        }
        z = rk4_step(&z, 1.0, u, h, p);
        if let Some(reason) = membership_violation(&AugmentedState::from_array(&z), p) {
            return Err(Error::StateSpaceViolation { s: travelled, reason });
        }
    }
    let s = (0..states.len()).map(|i| i as f64 * h).collect();
    Ok(SampledPath { s, states, controls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle_model::{integrate, ControlProfile};

    #[test]
    fn lap_closes_and_replays() {
        let p = VehicleParams::default();
        let path = figure_eight_lap(&p, &FigureEightConfig::default()).unwrap();
        let (a, b) = (path.states[0], *path.last());
        assert!((a.state.x3 - b.state.x3).hypot(a.state.y3 - b.state.y3) < 0.5);
        assert!((a.state.theta3 - b.state.theta3).abs() < 0.05);
        let mut prof = ControlProfile::default();
        for c in &path.controls {
            prof.push(c.v, c.u_omega, 0.05);
        }
        let replay = integrate(&path.states[0], &prof, 0.05 * (1.0 + 1e-9), &p).unwrap();
        let worst = replay
            .states
            .iter()
            .zip(&path.states)
            .flat_map(|(x, y)| x.to_array().into_iter().zip(y.to_array()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        let back = reverse_path(&path);
        for (f, b) in path.states.iter().zip(back.states.iter().rev()) {
            assert_eq!(f.state, b.state);
            assert_eq!(f.alpha, b.alpha);
        }
    }
}
