use nalgebra::{DMatrix, Matrix4, RowVector4, Vector4};
use serde::{Deserialize, Serialize};

use super::error_model::straight_line_matrices;
use super::nominal::RefPoint;
use crate::error::Result;
use crate::linalg;
use crate::vehicle_model::{Direction, VehicleParams};

/// LQ gain in positive-feedback form: the optimal input is `u = K x`.
pub fn lqr_gain(a: &Matrix4<f64>, b: &Vector4<f64>, q: &Matrix4<f64>, r: f64) -> Result<RowVector4<f64>> {
    let ad = DMatrix::from_column_slice(4, 4, a.as_slice());
    let bd = DMatrix::from_column_slice(4, 1, b.as_slice());
    let qd = DMatrix::from_column_slice(4, 4, q.as_slice());
    let rd = DMatrix::from_element(1, 1, r);
    let (k, _) = linalg::lqr(&ad, &bd, &qd, &rd)?;
    Ok(RowVector4::new(-k[0], -k[1], -k[2], -k[3]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqWeights {
    pub q_fwd: [f64; 4],
    pub q_rev: [f64; 4],
    pub r: f64,
}

impl Default for LqWeights {
    fn default() -> Self {
        Self {
            q_fwd: [0.05 * 0.8, 0.05 * 6.0, 0.05 * 8.0, 0.05 * 8.0],
            q_rev: [0.05 * 0.3, 0.05 * 6.0, 0.05 * 7.0, 0.05 * 5.0],
            r: 1.0,
        }
    }
}

/// Direction-dependent gains of the hybrid path-following controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridGains {
    pub k_fwd: RowVector4<f64>,
    pub k_rev: RowVector4<f64>,
}

impl HybridGains {
    /// Gains designed on the straight-line linearisation of each direction.
    pub fn design(params: &VehicleParams, w: &LqWeights) -> Result<Self> {
        let (a, b) = straight_line_matrices(params);
        let k_fwd = lqr_gain(&a, &b, &Matrix4::from_diagonal(&Vector4::from(w.q_fwd)), w.r)?;
        let k_rev = lqr_gain(&(-a), &(-b), &Matrix4::from_diagonal(&Vector4::from(w.q_rev)), w.r)?;
        Ok(Self { k_fwd, k_rev })
    }

    pub fn for_direction(&self, d: Direction) -> RowVector4<f64> {
        match d {
            Direction::Forward => self.k_fwd,
            Direction::Backward => self.k_rev,
        }
    }
}

/// Curvature command: feedforward plus state feedback, clamped to the steering limit.
/// Returns the command and whether it saturated.
pub fn hybrid_control(r: &RefPoint, xe: &Vector4<f64>, gains: &HybridGains, params: &VehicleParams) -> (f64, bool) {
    let kappa = r.kappa + (gains.for_direction(r.v_r) * xe)[0];
    let kmax = params.alpha_max.tan() / params.l1;
    if kappa.abs() > kmax {
        (kmax.copysign(kappa), true)
    } else {
        (kappa, false)
    }
}
