//! Hybrid path-following control around a nominal path, with per-mode and
//! switched Lyapunov certificates.

mod control;
mod error_model;
pub mod lyapunov;
mod nominal;
mod transition;

use nalgebra::{Matrix4, RowVector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle_model::{VehicleParams, VehicleState};

pub use control::{hybrid_control, lqr_gain, HybridGains, LqWeights};
pub use error_model::{
    compute_error, error_dynamics, linearize, project, straight_line_matrices, straight_ref, PathFollowingError,
};
pub use lyapunov::{Refutation, SearchOutcome, SwitchedOutcome, RECHECK_TOL};
pub use nominal::{NominalPath, NominalSample, RefPoint};
pub use transition::{alternating_straight_lyapunov, simulate_distance, straight_nominal, transition_matrix, DistanceTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCertificate {
    pub primitive_id: i64,
    pub k: RowVector4<f64>,
    pub p: Matrix4<f64>,
    pub epsilon: f64,
    pub rho: f64,
    /// Largest vertex eigenvalue of `A^T P + P A + 2 eps P` found by the re-check.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchCertificate {
    pub s: Matrix4<f64>,
    pub eta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub f: Vec<Matrix4<f64>>,
    pub residual: f64,
}

impl SwitchCertificate {
    /// Decay bound on the error at the start of the `k`-th primitive, given the
    /// per-mode condition number `rho`: `sqrt(eta) sqrt(rho) lambda^k`.
    pub fn decay_bound(&self, rho: f64, k: u32) -> f64 {
        self.eta.sqrt() * rho.sqrt() * self.lambda.powi(k as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModeVerdict {
    Certified(ModeCertificate),
    Refuted(Refutation),
    Inconclusive { worst_vertex: usize, worst: f64 },
}

/// Closed-loop vertex matrices `A_j + B_j K` at every sample of a
/// single-direction nominal path.
pub fn closed_loop_vertices(path: &NominalPath, gains: &HybridGains, params: &VehicleParams) -> Result<Vec<Matrix4<f64>>> {
    let range = 0..path.samples.len();
    let mut out = Vec::with_capacity(path.samples.len());
    for smp in &path.samples {
        let r = path.interpolate_in(range.clone(), smp.s_tilde);
        let (a, b) = linearize(&r, params)?;
        out.push(a + b * gains.for_direction(r.v_r));
    }
    Ok(out)
}

/// Check a candidate `P` against the vertex set by direct eigenvalue evaluation.
pub fn recheck_mode(vertices: &[Matrix4<f64>], p: &Matrix4<f64>, eps: f64) -> (bool, f64) {
    let r = lyapunov::continuous_residual(vertices, p, eps);
    let lmin = nalgebra::SymmetricEigen::new(*p).eigenvalues.min();
    (r <= RECHECK_TOL && lmin > 0.0, r)
}

/// Search for a quadratic certificate of decay rate `eps` for one primitive.
pub fn verify_mode(path: &NominalPath, gains: &HybridGains, eps: f64, params: &VehicleParams) -> Result<ModeVerdict> {
    let vertices = closed_loop_vertices(path, gains, params)?;
    if vertices.is_empty() {
        return Err(Error::InsufficientData("primitive without samples".into()));
    }
    let k = gains.for_direction(path.samples[0].v_r);
    let pid = path.samples[0].primitive_id;
    Ok(certify_vertices(&vertices, k, pid, eps))
}

pub fn certify_vertices(vertices: &[Matrix4<f64>], k: RowVector4<f64>, primitive_id: i64, eps: f64) -> ModeVerdict {
    match lyapunov::common_lyapunov(vertices, eps) {
        SearchOutcome::Certified(p) => {
            let (ok, residual) = recheck_mode(vertices, &p, eps);
            if !ok {
                return ModeVerdict::Inconclusive { worst_vertex: 0, worst: residual };
            }
            let e = nalgebra::SymmetricEigen::new(p).eigenvalues;
            ModeVerdict::Certified(ModeCertificate { primitive_id, k, p, epsilon: eps, rho: e.max() / e.min(), residual })
        }
        SearchOutcome::Refuted(r) => ModeVerdict::Refuted(r),
        SearchOutcome::Inconclusive { worst_vertex, worst } => ModeVerdict::Inconclusive { worst_vertex, worst },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SwitchVerdict {
    Certified(SwitchCertificate),
    Refuted(Refutation),
    Inconclusive { worst: f64 },
}

/// Search for a common discrete-time certificate over the transition matrices.
pub fn verify_switched(f: &[Matrix4<f64>], mu: f64) -> Result<SwitchVerdict> {
    if f.is_empty() {
        return Err(Error::InsufficientData("no transition matrices".into()));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter("mu must lie in (0, 1)".into()));
    }
    Ok(match lyapunov::switched_lyapunov(f, mu, 0x5eed) {
        SwitchedOutcome::Certified(sol) => {
            let residual = lyapunov::discrete_residual(f, &sol.s, mu);
            let e = nalgebra::SymmetricEigen::new(sol.s).eigenvalues;
            if residual > RECHECK_TOL || e.min() < 1.0 - 1e-9 || e.max() > sol.eta * (1.0 + 1e-9) {
                SwitchVerdict::Inconclusive { worst: residual }
            } else {
                SwitchVerdict::Certified(SwitchCertificate {
                    s: sol.s,
                    eta: sol.eta,
                    mu,
                    lambda: (1.0 - mu).sqrt(),
                    f: f.to_vec(),
                    residual,
                })
            }
        }
        SwitchedOutcome::Refuted(r) => SwitchVerdict::Refuted(r),
        SwitchedOutcome::Inconclusive { worst } => SwitchVerdict::Inconclusive { worst },
    })
}

/// Stateful projection onto a nominal path, walking its direction segments in order.
#[derive(Clone, Debug)]
pub struct PathTracker {
    segments: Vec<std::ops::Range<usize>>,
    active: usize,
    s_tilde: f64,
    pub window: f64,
}

impl PathTracker {
    pub fn new(path: &NominalPath) -> Self {
        let s0 = path.samples.first().map_or(0.0, |s| s.s_tilde);
        Self { segments: path.segments(), active: 0, s_tilde: s0, window: 3.0 }
    }

    pub fn s_tilde(&self) -> f64 {
        self.s_tilde
    }

    pub fn active_range(&self) -> std::ops::Range<usize> {
        self.segments[self.active].clone()
    }

    /// True once the last segment's end has been reached.
    pub fn finished(&self, path: &NominalPath) -> bool {
        self.active + 1 == self.segments.len() && self.s_tilde >= path.s_tilde_end() - 1e-9
    }

    /// Project `x` and return the reference point, switching to the next
    /// segment when the current one has been consumed.
    pub fn update(&mut self, x: &VehicleState, path: &NominalPath) -> RefPoint {
        loop {
            let range = self.active_range();
            let end = path.samples[range.end - 1].s_tilde;
            let s = project(x, path, range.clone(), self.s_tilde, self.window);
            self.s_tilde = s.max(self.s_tilde);
            if self.s_tilde >= end - 1e-9 && self.active + 1 < self.segments.len() {
                self.active += 1;
                continue;
            }
            return path.interpolate_in(range, self.s_tilde);
        }
    }
}
