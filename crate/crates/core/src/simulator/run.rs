//! Rate-scheduled closed-loop simulation.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, event, RunMetrics, TraceRow};
use super::scenario::{Estimator, MeasurementMode, Scenario};
use crate::error::{Error, Result};
use crate::observer::{add_outliers, h_loc, h_ran, iterative_ransac, simulate_point_cloud, EkfState, UpdateOutcome};
use crate::path_following::{compute_error, error_dynamics, hybrid_control, HybridGains, NominalPath, PathFollowingError, PathTracker, RefPoint};
use crate::vehicle_model::{rates, velocity_ratio, VehicleParams, VehicleState, MIN_VELOCITY_RATIO};

/// Distance from the reference point beyond which a run is abandoned [m].
pub const RUNAWAY_DISTANCE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The state left the region where the path coordinates are defined.
    Tube,
    /// A joint angle reached a right angle or the semitrailer stopped moving.
    JackKnife,
    Runaway,
    /// The estimator diverged or could not be initialised.
    Estimator,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub t: f64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub metrics: RunMetrics,
    pub failure: Option<Failure>,
    /// Semitrailer arc-length range of the nominal path.
    pub s_range: (f64, f64),
}

impl RunOutput {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Build the scenario's path and run it.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    let p = sc.params()?;
    let path = sc.nominal_path(&p)?;
    run_on_path(sc, &path, &p)
}

fn rk4(x: &[f64; 5], v: f64, kappa: f64, h: f64, p: &VehicleParams) -> [f64; 5] {
    let add = |a: &[f64; 5], k: &[f64; 5], c: f64| std::array::from_fn(|i| a[i] + c * k[i]);
    let k1 = rates(x, v, kappa, p);
    let k2 = rates(&add(x, &k1, 0.5 * h), v, kappa, p);
    let k3 = rates(&add(x, &k2, 0.5 * h), v, kappa, p);
    let k4 = rates(&add(x, &k3, h), v, kappa, p);
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn arr(x: &VehicleState) -> [f64; 5] {
    [x.x3, x.y3, x.theta3, x.beta3, x.beta2]
}

struct Sensors<'a> {
    sc: &'a Scenario,
    p: &'a VehicleParams,
    rng: ChaCha8Rng,
    loc: [Normal<f64>; 3],
    ran: [Normal<f64>; 2],
}

impl<'a> Sensors<'a> {
    fn new(sc: &'a Scenario, p: &'a VehicleParams) -> Result<Self> {
        let d = &sc.disturbance;
        let n = |var: f64| Normal::new(0.0, var.max(0.0).sqrt()).map_err(|e| Error::Config(e.to_string()));
        Ok(Self {
            sc,
            p,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            loc: [n(d.loc_var[0])?, n(d.loc_var[1])?, n(d.loc_var[2])?],
            ran: [n(d.ran_var[0])?, n(d.ran_var[1])?],
        })
    }

    fn loc(&mut self, x: &VehicleState) -> Vector3<f64> {
        let y = h_loc(&x.to_vector(), self.p);
        match self.sc.disturbance.mode {
            MeasurementMode::Exact => y,
            _ => y + Vector3::from_fn(|i, _| self.loc[i].sample(&mut self.rng)),
        }
    }

    fn ran(&mut self, x: &VehicleState) -> Option<Vector2<f64>> {
        let y = h_ran(&x.to_vector(), self.p);
        match self.sc.disturbance.mode {
            MeasurementMode::Exact => Some(y),
            MeasurementMode::Gaussian => Some(y + Vector2::from_fn(|i, _| self.ran[i].sample(&mut self.rng))),
            MeasurementMode::Lidar => {
                let (lidar, d) = (&self.sc.lidar, &self.sc.disturbance);
                let mut cloud = simulate_point_cloud(x, self.p, lidar, d.lidar_sigma, &mut self.rng);
                if d.outliers > 0.0 {
                    add_outliers(&mut cloud, d.outliers, lidar, lidar.max_range, &mut self.rng);
                }
                iterative_ransac(&cloud, self.p, lidar, &self.sc.ransac, &mut self.rng).map(|m| Vector2::new(m.ly, m.phi))
            }
        }
    }
}

fn tube_failure(e: Error, t: f64) -> Failure {
    Failure { kind: FailureKind::Tube, t, message: e.to_string() }
}

/// Run the closed loop on a given nominal path.
pub fn run_on_path(sc: &Scenario, path: &NominalPath, p: &VehicleParams) -> Result<RunOutput> {
    sc.validate()?;
    if path.samples.len() < 2 {
        return Err(Error::InvalidParameter("nominal path needs at least two samples".into()));
    }
    let s_range = (path.samples[0].s_tilde, path.s_tilde_end());
    let gains = HybridGains::design(p, &sc.weights)?;
    let f = &sc.filter;
    let dt = 1.0 / sc.plant_hz;
    let per = |hz: f64| (sc.plant_hz / hz).round() as u64;
    let (ekf_every, loc_every, ran_every, ctrl_every) = (per(f.ekf_hz), per(f.loc_hz), per(f.ran_hz), per(f.ctrl_hz));
    let max_steps = (sc.duration_cap * sc.plant_hz).ceil() as u64;
    let bias = sc.disturbance.curvature_bias;

    let mut x = sc.initial_true_state(path)?;
    let mut sensors = Sensors::new(sc, p)?;
    let mut trace = Vec::new();
    let finish = |trace: Vec<TraceRow>, failure: Option<Failure>| {
        let metrics = compute_metrics(&trace, s_range, sc.settle_tol);
        Ok(RunOutput { trace, metrics, failure, s_range })
    };

    let mut ekf = match sc.estimator {
        Estimator::Truth => None,
        Estimator::Ekf => {
            let y_loc = sensors.loc(&x);
            let Some(y_ran) = sensors.ran(&x) else {
                let msg = "no joint-angle measurement at start".to_string();
                return finish(trace, Some(Failure { kind: FailureKind::Estimator, t: 0.0, message: msg }));
            };
            let mut ekf = match EkfState::initialize(&y_loc, &y_ran, f, p) {
                Ok(e) => e,
                Err(e) => return finish(trace, Some(Failure { kind: FailureKind::Estimator, t: 0.0, message: e.to_string() })),
            };
            let ticks = (sc.warmup * f.ekf_hz).round() as u64;
            for tick in 1..=ticks {
                let res = ekf.predict(0.0, 0.0, 1.0 / f.ekf_hz, f, p);
                if let Err(e) = res {
                    return finish(trace, Some(Failure { kind: FailureKind::Estimator, t: 0.0, message: e.to_string() }));
                }
                if tick % (loc_every / ekf_every) == 0 {
                    let y = sensors.loc(&x);
                    ekf.update_loc(&y, f, p);
                }
                if tick % (ran_every / ekf_every) == 0 {
                    if let Some(y) = sensors.ran(&x) {
                        ekf.update_ran(&y, f, p);
                    }
                }
            }
            Some(ekf)
        }
    };
    let mut est = x;
    let mut est_tracker = PathTracker::new(path);
    let mut true_tracker = PathTracker::new(path);
    let mut r_est: RefPoint = path.interpolate(s_range.0);
    let mut e_est = PathFollowingError::default();
    let (mut v, mut kappa, mut saturated) = (0.0, 0.0, false);

    for k in 0..=max_steps {
        let t = k as f64 * dt;
        let mut events = 0u8;
        if k % ekf_every == 0 {
            match ekf.as_mut() {
                Some(ekf) if k > 0 => {
                    if let Err(e) = ekf.predict(v, kappa, 1.0 / f.ekf_hz, f, p) {
                        return finish(trace, Some(Failure { kind: FailureKind::Estimator, t, message: e.to_string() }));
                    }
                    let tick = k / ekf_every;
                    if tick % (loc_every / ekf_every) == 0 {
                        let y = sensors.loc(&x);
                        if ekf.update_loc(&y, f, p) == UpdateOutcome::Gated {
                            events |= event::LOC_GATED;
                        }
                    }
                    if tick % (ran_every / ekf_every) == 0 {
                        match sensors.ran(&x) {
                            Some(y) => {
                                if ekf.update_ran(&y, f, p) == UpdateOutcome::Gated {
                                    events |= event::RAN_GATED;
                                }
                            }
                            None => events |= event::RAN_MISSING,
                        }
                    }
                    est = ekf.mean;
                }
                Some(ekf) => est = ekf.mean,
                None => est = x,
            }
            let seg = est_tracker.active_range();
            r_est = est_tracker.update(&est, path);
            if est_tracker.active_range() != seg {
                events |= event::SWITCH;
            }
            e_est = match compute_error(&est, &r_est, p) {
                Ok(e) => e,
                Err(e) => return finish(trace, Some(tube_failure(e, t))),
            };
        }
        if k % ctrl_every == 0 {
            (kappa, saturated) = hybrid_control(&r_est, &e_est.to_vector(), &gains, p);
            v = sc.speeds.for_direction(r_est.v_r);
            events |= event::CONTROL;
        }
        if saturated {
            events |= event::SATURATED;
        }

        let r_true = true_tracker.update(&x, path);
        let e_true = match compute_error(&x, &r_true, p) {
            Ok(e) => e,
            Err(e) => return finish(trace, Some(tube_failure(e, t))),
        };
        let applied = kappa + bias;
        let gv = velocity_ratio(x.beta2, x.beta3, applied, p);
        if !(gv > MIN_VELOCITY_RATIO) {
            let msg = format!("semitrailer speed ratio {gv:.3e} at joint angles ({:.3}, {:.3}) rad", x.beta3, x.beta2);
            return finish(trace, Some(Failure { kind: FailureKind::JackKnife, t, message: msg }));
        }
        let s_dot = match error_dynamics(&e_true.to_vector(), applied - r_true.kappa, &r_true, v, p) {
            Ok((sd, _)) => sd,
            Err(e) => return finish(trace, Some(tube_failure(e, t))),
        };
        let m = &est;
        trace.push(TraceRow {
            t,
            x3: x.x3,
            y3: x.y3,
            theta3: x.theta3,
            beta3: x.beta3,
            beta2: x.beta2,
            est_x3: m.x3,
            est_y3: m.y3,
            est_theta3: m.theta3,
            est_beta3: m.beta3,
            est_beta2: m.beta2,
            s_tilde: est_tracker.s_tilde(),
            err_z3: e_est.z3,
            err_theta3: e_est.theta3,
            err_beta3: e_est.beta3,
            err_beta2: e_est.beta2,
            true_s_tilde: true_tracker.s_tilde(),
            true_z3: e_true.z3,
            true_theta3: e_true.theta3,
            true_beta3: e_true.beta3,
            true_beta2: e_true.beta2,
            s_tilde_dot: s_dot,
            v,
            kappa,
            kappa_r: r_est.kappa,
            events,
        });

        if est_tracker.finished(path) {
            return finish(trace, None);
        }
        if (x.x3 - r_true.x3).hypot(x.y3 - r_true.y3) > RUNAWAY_DISTANCE {
            let msg = format!("more than {RUNAWAY_DISTANCE} m from the path");
            return finish(trace, Some(Failure { kind: FailureKind::Runaway, t, message: msg }));
        }
        if k == max_steps {
            break;
        }
        let xn = rk4(&arr(&x), v, applied, dt, p);
        if !xn.iter().all(|c| c.is_finite()) || xn[3].abs() >= FRAC_PI_2 || xn[4].abs() >= FRAC_PI_2 {
            let msg = format!("joint angles ({:.3}, {:.3}) rad", xn[3], xn[4]);
            return finish(trace, Some(Failure { kind: FailureKind::JackKnife, t: t + dt, message: msg }));
        }
        x = VehicleState::new(xn[0], xn[1], xn[2], xn[3], xn[4]);
    }
    let t = max_steps as f64 * dt;
    finish(trace, Some(Failure { kind: FailureKind::Timeout, t, message: format!("path not completed within {} s", sc.duration_cap) }))
}
