use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::vehicle_model::SampledPath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Weight on (beta3, beta2).
    pub q1: Matrix2<f64>,
    /// Weight on (alpha, omega, u_omega).
    pub q2: Matrix3<f64>,
}

impl CostWeights {
    pub fn forward() -> Self {
        Self { q1: Matrix2::zeros(), q2: Matrix3::from_diagonal(&Vector3::new(1.0, 10.0, 1.0)) }
    }

    /// Penalises large joint angles of opposite sign.
    pub fn backward() -> Self {
        Self { q1: Matrix2::new(11.0, -10.0, -10.0, 11.0), ..Self::forward() }
    }

    pub fn integrand(&self, beta3: f64, beta2: f64, alpha: f64, omega: f64, u_omega: f64) -> f64 {
        let b = Vector2::new(beta3, beta2);
        let a = Vector3::new(alpha, omega, u_omega);
        1.0 + (b.transpose() * self.q1 * b)[0] + (a.transpose() * self.q2 * a)[0]
    }
}

pub fn stage_cost_integrand(beta3: f64, beta2: f64, alpha: f64, omega: f64, u_omega: f64, w: &CostWeights) -> f64 {
    w.integrand(beta3, beta2, alpha, omega, u_omega)
}

/// Trapezoid-rule cost of a sampled path. Each interval uses its own control on both ends.
pub fn path_cost(path: &SampledPath, w: &CostWeights) -> f64 {
    let mut j = 0.0;
    for i in 1..path.states.len() {
        let h = path.s[i] - path.s[i - 1];
        let u = path.controls[i - 1].u_omega;
        let l = |k: usize| {
            let z = &path.states[k];
            w.integrand(z.state.beta3, z.state.beta2, z.alpha, z.omega, u)
        };
        j += 0.5 * h * (l(i - 1) + l(i));
    }
    j
}

/// Cost rounded to a multiple of 2^-30. Sums of such costs are exact below 2^23,
/// so every search over the lattice reports the same optimum bit for bit.
pub fn quantize_cost(c: f64) -> f64 {
    const Q: f64 = (1u64 << 30) as f64;
    (c * Q).round() / Q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrand_values() {
        let b = CostWeights::backward();
        assert_eq!(stage_cost_integrand(0.0, 0.0, 0.0, 0.0, 0.0, &b), 1.0);
        let zero_q2 = CostWeights { q2: Matrix3::zeros(), ..b };
        assert!((zero_q2.integrand(0.1, 0.1, 0.3, 0.2, 1.0) - 1.02).abs() < 1e-12);
        assert!((zero_q2.integrand(0.1, -0.1, 0.0, 0.0, 0.0) - 1.42).abs() < 1e-12);
        let f = CostWeights::forward();
        assert!((f.integrand(0.4, -0.4, 0.1, 0.1, 0.0) - (1.0 + 0.01 + 0.1)).abs() < 1e-12);
    }
}
