use nalgebra::{Matrix2, Matrix3, Matrix5, SMatrix, SymmetricEigen, Vector2, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle_model::{wrap_angle, VehicleParams, VehicleState};

/// Noise levels and update rates of the estimator. Covariances are diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Input noise on (v, kappa).
    pub w_diag: [f64; 2],
    /// Localisation noise on (x1, y1, theta1).
    pub loc_diag: [f64; 3],
    /// Lidar measurement noise on (Ly, phi).
    pub ran_diag: [f64; 2],
    /// Initial state covariance.
    pub x0_diag: [f64; 5],
    pub ekf_hz: f64,
    pub loc_hz: f64,
    pub ran_hz: f64,
    pub ctrl_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            w_diag: [1e-3, 1e-3],
            loc_diag: [1e-3, 1e-3, 0.5e-3],
            ran_diag: [0.5e-3, 0.1e-3],
            x0_diag: [0.5, 0.5, 0.05, 0.05, 0.05],
            ekf_hz: 100.0,
            loc_hz: 100.0,
            ran_hz: 20.0,
            ctrl_hz: 50.0,
        }
    }
}

/// Chi-square gates at 0.997 for three and two degrees of freedom.
pub const GATE_LOC: f64 = 13.8;
pub const GATE_RAN: f64 = 11.62;
const EIG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EkfState {
    pub mean: VehicleState,
    pub cov: Matrix5<f64>,
    pub initialized: bool,
    /// Number of times the covariance eigenvalue floor was applied.
    pub floor_events: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOutcome {
    Accepted,
    Gated,
}

/// Euler-forward prediction model `x + Ts v f(x, kappa)`.
pub fn predict_mean(x: &Vector5<f64>, v: f64, kappa: f64, ts: f64, p: &VehicleParams) -> Vector5<f64> {
    let r = crate::vehicle_model::rates(&[x[0], x[1], x[2], x[3], x[4]], v, kappa, p);
    x + Vector5::from(r) * ts
}

/// Jacobians of the prediction model with respect to the state and to `(v, kappa)`.
pub fn predict_jacobians(x: &Vector5<f64>, v: f64, kappa: f64, ts: f64, p: &VehicleParams) -> (Matrix5<f64>, SMatrix<f64, 5, 2>) {
    let (st, ct) = x[2].sin_cos();
    let (sb3, cb3) = x[3].sin_cos();
    let (sb2, cb2) = x[4].sin_cos();
    let c1 = cb2 + p.m1 * sb2 * kappa;
    let dc1_b2 = -sb2 + p.m1 * cb2 * kappa;
    let dc1_k = p.m1 * sb2;
    let gv = cb3 * c1;
    let dgv_b3 = -sb3 * c1;
    let dgv_b2 = cb3 * dc1_b2;
    let dgv_k = cb3 * dc1_k;

    let mut a = Matrix5::zeros();
    let mut b = SMatrix::<f64, 5, 2>::zeros();
    // x3, y3
    a[(0, 2)] = -v * gv * st;
    a[(0, 3)] = v * ct * dgv_b3;
    a[(0, 4)] = v * ct * dgv_b2;
    b[(0, 0)] = gv * ct;
    b[(0, 1)] = v * ct * dgv_k;
    a[(1, 2)] = v * gv * ct;
    a[(1, 3)] = v * st * dgv_b3;
    a[(1, 4)] = v * st * dgv_b2;
    b[(1, 0)] = gv * st;
    b[(1, 1)] = v * st * dgv_k;
    // theta3
    let f2_b3 = v * cb3 * c1 / p.l3;
    let f2_b2 = v * sb3 * dc1_b2 / p.l3;
    let f2_k = v * sb3 * dc1_k / p.l3;
    a[(2, 3)] = f2_b3;
    a[(2, 4)] = f2_b2;
    b[(2, 0)] = sb3 * c1 / p.l3;
    b[(2, 1)] = f2_k;
    // beta3
    a[(3, 3)] = -f2_b3;
    a[(3, 4)] = v * (cb2 + p.m1 * sb2 * kappa) / p.l2 - f2_b2;
    b[(3, 0)] = (sb2 - p.m1 * cb2 * kappa) / p.l2 - sb3 * c1 / p.l3;
    b[(3, 1)] = -v * p.m1 * cb2 / p.l2 - f2_k;
    // beta2
    a[(4, 4)] = v * (-cb2 / p.l2 - p.m1 * sb2 * kappa / p.l2);
    b[(4, 0)] = kappa - sb2 / p.l2 + p.m1 * cb2 * kappa / p.l2;
    b[(4, 1)] = v * (1.0 + p.m1 * cb2 / p.l2);

    (Matrix5::identity() + a * ts, b * ts)
}

/// Tractor rear-axle pose reached through the semitrailer, dolly and hitch chain.
pub fn h_loc(x: &Vector5<f64>, p: &VehicleParams) -> Vector3<f64> {
    let th2 = x[2] + x[3];
    let th1 = th2 + x[4];
    Vector3::new(
        x[0] + p.l3 * x[2].cos() + p.l2 * th2.cos() + p.m1 * th1.cos(),
        x[1] + p.l3 * x[2].sin() + p.l2 * th2.sin() + p.m1 * th1.sin(),
        th1,
    )
}

pub fn h_loc_jacobian(x: &Vector5<f64>, p: &VehicleParams) -> SMatrix<f64, 3, 5> {
    let th2 = x[2] + x[3];
    let th1 = th2 + x[4];
    let (s3, c3) = x[2].sin_cos();
    let (s2, c2) = th2.sin_cos();
    let (s1, c1) = th1.sin_cos();
    #[rustfmt::skip]
    let h = SMatrix::<f64, 3, 5>::new(
        1.0, 0.0, -p.l3 * s3 - p.l2 * s2 - p.m1 * s1, -p.l2 * s2 - p.m1 * s1, -p.m1 * s1,
        0.0, 1.0, p.l3 * c3 + p.l2 * c2 + p.m1 * c1, p.l2 * c2 + p.m1 * c1, p.m1 * c1,
        0.0, 0.0, 1.0, 1.0, 1.0,
    );
    h
}

/// Lateral offset of the semitrailer front midpoint in the tractor frame and
/// the tractor-to-semitrailer orientation.
pub fn h_ran(x: &Vector5<f64>, p: &VehicleParams) -> Vector2<f64> {
    let phi = x[3] + x[4];
    Vector2::new(p.l2 * x[4].sin() - p.la * phi.sin(), phi)
}

pub fn h_ran_jacobian(x: &Vector5<f64>, p: &VehicleParams) -> SMatrix<f64, 2, 5> {
    let cphi = (x[3] + x[4]).cos();
    SMatrix::<f64, 2, 5>::new(
        0.0, 0.0, 0.0, -p.la * cphi, p.l2 * x[4].cos() - p.la * cphi,
        0.0, 0.0, 0.0, 1.0, 1.0,
    )
}

/// Closed-form state from one localisation and one lidar measurement.
pub fn initial_state(y_loc: &Vector3<f64>, y_ran: &Vector2<f64>, p: &VehicleParams) -> Result<VehicleState> {
    let (ly, phi) = (y_ran[0], y_ran[1]);
    let arg = (ly + p.la * phi.sin()) / p.l2;
    if !(arg.abs() <= 1.0) {
        return Err(Error::Domain(format!("joint-angle inverse out of range ({arg:.4})")));
    }
    let beta2 = arg.asin();
    let beta3 = phi - beta2;
    let th1 = y_loc[2];
    let th3 = th1 - phi;
    let th2 = th3 + beta3;
    let x3 = y_loc[0] - p.l3 * th3.cos() - p.l2 * th2.cos() - p.m1 * th1.cos();
    let y3 = y_loc[1] - p.l3 * th3.sin() - p.l2 * th2.sin() - p.m1 * th1.sin();
    Ok(VehicleState::new(x3, y3, th3, beta3, beta2))
}

impl EkfState {
    pub fn initialize(y_loc: &Vector3<f64>, y_ran: &Vector2<f64>, noise: &NoiseConfig, p: &VehicleParams) -> Result<Self> {
        Ok(Self {
            mean: initial_state(y_loc, y_ran, p)?,
            cov: Matrix5::from_diagonal(&Vector5::from(noise.x0_diag)),
            initialized: true,
            floor_events: 0,
        })
    }

    pub fn predict(&mut self, v: f64, kappa: f64, ts: f64, noise: &NoiseConfig, p: &VehicleParams) -> Result<()> {
        if !self.initialized {
            return Err(Error::InvalidParameter("filter not initialised".into()));
        }
        let x = self.mean.to_vector();
        let (f, g) = predict_jacobians(&x, v, kappa, ts, p);
        let xn = predict_mean(&x, v, kappa, ts, p);
        if xn[3].abs() >= std::f64::consts::FRAC_PI_2 || xn[4].abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Divergence("joint-angle estimate left the admissible set".into()));
        }
        let q = Matrix2::from_diagonal(&Vector2::from(noise.w_diag));
        self.mean = VehicleState::from_vector(&xn);
        self.cov = f * self.cov * f.transpose() + g * q * g.transpose();
        self.condition();
        Ok(())
    }

    pub fn update_loc(&mut self, y: &Vector3<f64>, noise: &NoiseConfig, p: &VehicleParams) -> UpdateOutcome {
        let x = self.mean.to_vector();
        let mut nu = y - h_loc(&x, p);
        nu[2] = wrap_angle(nu[2]);
        let h = h_loc_jacobian(&x, p);
        let r = Matrix3::from_diagonal(&Vector3::from(noise.loc_diag));
        self.kalman_update(&nu, &h, &r, GATE_LOC)
    }

    pub fn update_ran(&mut self, y: &Vector2<f64>, noise: &NoiseConfig, p: &VehicleParams) -> UpdateOutcome {
        let x = self.mean.to_vector();
        let mut nu = y - h_ran(&x, p);
        nu[1] = wrap_angle(nu[1]);
        let h = h_ran_jacobian(&x, p);
        let r = Matrix2::from_diagonal(&Vector2::from(noise.ran_diag));
        self.kalman_update(&nu, &h, &r, GATE_RAN)
    }

    fn kalman_update<const M: usize>(
        &mut self,
        nu: &SMatrix<f64, M, 1>,
        h: &SMatrix<f64, M, 5>,
        r: &SMatrix<f64, M, M>,
        gate: f64,
    ) -> UpdateOutcome {
        let s = h * self.cov * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return UpdateOutcome::Gated;
        };
        let d2 = (nu.transpose() * s_inv * nu)[0];
        if !(d2 <= gate) {
            log::debug!("measurement gated, d2 = {d2:.2}");
            return UpdateOutcome::Gated;
        }
        let k = self.cov * h.transpose() * s_inv;
        let x = self.mean.to_vector() + k * nu;
        self.mean = VehicleState::from_vector(&x);
        let ikh = Matrix5::identity() - k * h;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        self.condition();
        UpdateOutcome::Accepted
    }

    fn condition(&mut self) {
        let c = (self.cov + self.cov.transpose()) * 0.5;
        let mut e = SymmetricEigen::new(c);
        if e.eigenvalues.min() < EIG_FLOOR {
            self.floor_events += 1;
            for i in 0..5 {
                e.eigenvalues[i] = e.eigenvalues[i].max(EIG_FLOOR);
            }
            let r = e.recompose();
            self.cov = (r + r.transpose()) * 0.5;
        } else {
            self.cov = c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn p() -> VehicleParams {
        VehicleParams::default()
    }

    fn random_state(rng: &mut impl Rng) -> Vector5<f64> {
        Vector5::new(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-3.1..3.1),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
        )
    }

    #[test]
    fn prediction_jacobians_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pp = p();
        for _ in 0..20 {
            let x = random_state(&mut rng);
            let v = rng.gen_range(-1.0..1.0);
            let k = rng.gen_range(-0.15..0.15);
            let ts = 0.01;
            let (f, g) = predict_jacobians(&x, v, k, ts, &pp);
            let h = 1e-6;
            for j in 0..5 {
                let mut e = Vector5::zeros();
                e[j] = h;
                let d = (predict_mean(&(x + e), v, k, ts, &pp) - predict_mean(&(x - e), v, k, ts, &pp)) / (2.0 * h);
                assert!((d - f.column(j)).amax() < 1e-6, "F col {j}");
            }
            let dv = (predict_mean(&x, v + h, k, ts, &pp) - predict_mean(&x, v - h, k, ts, &pp)) / (2.0 * h);
            let dk = (predict_mean(&x, v, k + h, ts, &pp) - predict_mean(&x, v, k - h, ts, &pp)) / (2.0 * h);
            assert!((dv - g.column(0)).amax() < 1e-6);
            assert!((dk - g.column(1)).amax() < 1e-6);
        }
    }

    #[test]
    fn measurement_jacobians_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let pp = p();
        for _ in 0..20 {
            let x = random_state(&mut rng);
            let (hl, hr) = (h_loc_jacobian(&x, &pp), h_ran_jacobian(&x, &pp));
            for j in 0..5 {
                let mut e = Vector5::zeros();
                e[j] = 1e-6;
                let dl = (h_loc(&(x + e), &pp) - h_loc(&(x - e), &pp)) / 2e-6;
                let dr = (h_ran(&(x + e), &pp) - h_ran(&(x - e), &pp)) / 2e-6;
                assert!((dl - hl.column(j)).amax() < 1e-6);
                assert!((dr - hr.column(j)).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn ran_measurement_value() {
        let x = Vector5::new(0.0, 0.0, 0.0, 0.0, 0.1);
        let y = h_ran(&x, &p());
        assert!((y[0] - (3.87 - 1.73) * 0.1f64.sin()).abs() < 1e-12);
        assert_eq!(y[1], 0.1);
    }

    #[test]
    fn straight_initialisation() {
        let pp = p();
        let x = initial_state(&Vector3::new(0.0, 0.0, 0.0), &Vector2::zeros(), &pp).unwrap();
        assert!((x.x3 + pp.l3 + pp.l2 + pp.m1).abs() < 1e-12);
        assert!(x.y3 == 0.0 && x.theta3 == 0.0 && x.beta3 == 0.0 && x.beta2 == 0.0);
    }

    #[test]
    fn zero_input_prediction_adds_input_noise_only() {
        let pp = p();
        let n = NoiseConfig::default();
        let mut e = EkfState::initialize(&Vector3::new(1.0, 2.0, 0.3), &Vector2::new(0.1, 0.05), &n, &pp).unwrap();
        let before = e.clone();
        e.predict(0.0, 0.0, 0.01, &n, &pp).unwrap();
        assert_eq!(e.mean, before.mean);
        let (_, g) = predict_jacobians(&before.mean.to_vector(), 0.0, 0.0, 0.01, &pp);
        let expect = before.cov + g * Matrix2::from_diagonal(&Vector2::from(n.w_diag)) * g.transpose();
        assert!((e.cov - expect).amax() < 1e-15);
    }

    #[test]
    fn updates_shrink_covariance() {
        let pp = p();
        let n = NoiseConfig::default();
        let x = Vector5::new(3.0, -1.0, 0.4, 0.1, -0.2);
        let mut e = EkfState::initialize(&h_loc(&x, &pp), &h_ran(&x, &pp), &n, &pp).unwrap();
        let t0 = e.cov.trace();
        assert_eq!(e.update_loc(&h_loc(&x, &pp), &n, &pp), UpdateOutcome::Accepted);
        assert!((e.mean.to_vector() - x).amax() < 1e-9);
        assert!(e.cov.trace() < t0);
        let t1 = e.cov.trace();
        assert_eq!(e.update_ran(&h_ran(&x, &pp), &n, &pp), UpdateOutcome::Accepted);
        assert!(e.cov.trace() < t1);
    }
}
