//! Single-shooting transcription of the primitive optimal control problem,
//! solved by SQP with a damped BFGS Hessian and an L1 merit line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cost::CostWeights;
use crate::error::{Error, Result};
use crate::vehicle_model::{aug_rates, integrate, wrap_angle, AugmentedState, ControlProfile, Direction, SampledPath, VehicleParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpSettings {
    /// Number of piecewise-constant control intervals.
    pub intervals: usize,
    /// Largest integration step of the returned trajectory [m].
    pub max_step: f64,
    /// Integration step used while optimising [m].
    pub coarse_step: f64,
    pub max_iter: usize,
    /// Terminal constraint tolerance of the returned trajectory.
    pub tol_feas: f64,
    /// Terminal constraint tolerance while optimising.
    pub coarse_tol_feas: f64,
    /// Lagrangian gradient tolerance.
    pub tol_opt: f64,
    /// Fraction of alpha_max usable by primitives.
    pub tightening: f64,
    /// Weight of the quadratic exterior penalty on path bounds.
    pub penalty: f64,
}

impl Default for OcpSettings {
    fn default() -> Self {
        Self { intervals: 20, max_step: 0.05, coarse_step: 0.25, max_iter: 150, tol_feas: 1e-9, coarse_tol_feas: 1e-7, tol_opt: 1e-4, tightening: 0.8, penalty: 1e4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub u: Vec<f64>,
    pub s_f: f64,
    /// RK4 steps per control interval.
    pub substeps: usize,
    pub cost: f64,
    pub violation: f64,
    pub stationarity: f64,
    pub iterations: usize,
    /// Whether the optimality test was met before the feasibility polish.
    pub converged: bool,
}

impl OcpSolution {
    pub fn step(&self) -> f64 {
        self.s_f / (self.u.len() * self.substeps) as f64
    }

    pub fn profile(&self) -> ControlProfile {
        let h = self.s_f / self.u.len() as f64;
        let mut p = ControlProfile::default();
        for &u in &self.u {
            p.push(Direction::Forward, u, h);
        }
        p
    }

    /// Replay through the shared integrator; reproduces the optimised trajectory exactly.
    pub fn path(&self, start: &AugmentedState, params: &VehicleParams) -> Result<SampledPath> {
        integrate(start, &self.profile(), self.s_f / (self.u.len() * self.substeps) as f64, params)
    }
}

type Z = [f64; 8];

/// Forward-motion shooting evaluator. The eighth state component accumulates the stage cost.
struct Shooter<'a> {
    z0: Z,
    target: [f64; 7],
    w: CostWeights,
    p: &'a VehicleParams,
    n: usize,
    m: usize,
    alpha_lim: f64,
    penalty: f64,
    u_scale: f64,
    s_ref: f64,
}

const S_SCALE: f64 = 0.1;
const BETA_SOFT: f64 = 1.3;

impl<'a> Shooter<'a> {
    fn rates(&self, z: &Z, u: f64) -> Z {
        let z7 = [z[0], z[1], z[2], z[3], z[4], z[5], z[6]];
        let r = aug_rates(&z7, 1.0, u, self.p);
        let l = self.w.integrand(z[3], z[4], z[5], z[6], u);
        [r[0], r[1], r[2], r[3], r[4], r[5], r[6], l]
    }

    fn rk4(&self, z: &Z, u: f64, h: f64) -> Z {
        let add = |a: &Z, k: &Z, c: f64| {
            let mut o = *a;
            for i in 0..8 {
                o[i] += c * k[i];
            }
            o
        };
        let k1 = self.rates(z, u);
        let k2 = self.rates(&add(z, &k1, 0.5 * h), u);
        let k3 = self.rates(&add(z, &k2, 0.5 * h), u);
        let k4 = self.rates(&add(z, &k3, h), u);
        let mut o = *z;
        for i in 0..8 {
            o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        o
    }

    fn bound_violation(&self, z: &Z, u: f64) -> f64 {
        let sq = |x: f64| if x > 0.0 { x * x } else { 0.0 };
        sq(z[5].abs() - self.alpha_lim)
            + sq(z[6].abs() - self.p.omega_max)
            + sq(u.abs() - self.p.u_omega_max)
            + sq(z[3].abs() - BETA_SOFT)
            + sq(z[4].abs() - BETA_SOFT)
    }

    fn decode(&self, w: &[f64]) -> (Vec<f64>, f64) {
        let u = w[..self.n].iter().map(|x| x * self.u_scale).collect();
        (u, self.s_ref * (S_SCALE * w[self.n]).exp())
    }

    /// Integrate intervals `from..n` starting at `z`; returns the end state and added penalty.
    fn run(&self, u: &[f64], s_f: f64, from: usize, z: Z, mut nodes: Option<(&mut Vec<Z>, &mut Vec<f64>)>) -> (Z, f64) {
        let hs = s_f / (self.n * self.m) as f64;
        let mut z = z;
        let mut pen = 0.0;
        for (k, &uk) in u.iter().enumerate().skip(from) {
            if let Some((zs, ps)) = nodes.as_mut() {
                zs[k] = z;
                ps[k] = pen;
            }
            for _ in 0..self.m {
                z = self.rk4(&z, uk, hs);
                pen += hs * self.bound_violation(&z, uk);
            }
        }
        if let Some((zs, ps)) = nodes.as_mut() {
            zs[self.n] = z;
            ps[self.n] = pen;
        }
        (z, pen)
    }

    fn objective_and_constraints(&self, z_end: &Z, pen: f64) -> (f64, [f64; 7]) {
        let mut c = [0.0; 7];
        for i in 0..7 {
            c[i] = z_end[i] - self.target[i];
        }
        c[2] = wrap_angle(c[2]);
        let f = z_end[7] + self.penalty * pen;
        if !f.is_finite() || c.iter().any(|x| !x.is_finite()) {
            return (f64::INFINITY, [f64::INFINITY; 7]);
        }
        (f, c)
    }

    fn eval(&self, w: &[f64]) -> (f64, [f64; 7]) {
        let (u, s_f) = self.decode(w);
        let (z, pen) = self.run(&u, s_f, 0, self.z0, None);
        self.objective_and_constraints(&z, pen)
    }

    /// Value, constraints and their central-difference derivatives. Perturbing one control
    /// only re-integrates the suffix after it.
    fn eval_with_derivatives(&self, w: &[f64]) -> (f64, [f64; 7], DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let (u, s_f) = self.decode(w);
        let mut zs = vec![[0.0; 8]; n + 1];
        let mut ps = vec![0.0; n + 1];
        let (z_end, pen) = self.run(&u, s_f, 0, self.z0, Some((&mut zs, &mut ps)));
        let (f, c) = self.objective_and_constraints(&z_end, pen);
        let mut g = DVector::zeros(n + 1);
        let mut jac = DMatrix::zeros(7, n + 1);
        let d = 1e-6;
        for k in 0..=n {
            let side = |sgn: f64| -> (f64, [f64; 7]) {
                if k < n {
                    let mut up = u.clone();
                    up[k] += sgn * d * self.u_scale;
                    let (ze, pe) = self.run(&up, s_f, k, zs[k], None);
                    self.objective_and_constraints(&ze, ps[k] + pe)
                } else {
                    let mut wp = w.to_vec();
                    wp[n] += sgn * d;
                    self.eval(&wp)
                }
            };
            let (fp, cp) = side(1.0);
            let (fm, cm) = side(-1.0);
            g[k] = (fp - fm) / (2.0 * d);
            for i in 0..7 {
                let mut dc = cp[i] - cm[i];
                if i == 2 {
                    dc = wrap_angle(dc);
                }
                jac[(i, k)] = dc / (2.0 * d);
            }
        }
        (f, c, g, jac)
    }

    /// Second differences of the Lagrangian `f + lam . c`. Pairs of control perturbations
    /// share the integration up to the later one.
    fn lagrangian_hessian(&self, w: &[f64], lam: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let d = 1e-4;
        let lag = |z: &Z, pen: f64| {
            let (f, c) = self.objective_and_constraints(z, pen);
            f + (0..7).map(|i| lam[i] * c[i]).sum::<f64>()
        };
        let (u, s_f) = self.decode(w);
        let mut zs = vec![[0.0; 8]; n + 1];
        let mut ps = vec![0.0; n + 1];
        let (z_end, pen) = self.run(&u, s_f, 0, self.z0, Some((&mut zs, &mut ps)));
        let l0 = lag(&z_end, pen);
        let mut h = DMatrix::zeros(n + 1, n + 1);
        let du = d * self.u_scale;
        let mut zi = vec![[0.0; 8]; n + 1];
        let mut pi = vec![0.0; n + 1];
        let mut single = vec![[0.0; 2]; n];
        let mut pair = vec![[[0.0; 2]; 2]; n];
        for i in 0..n {
            for (a, sa) in [1.0, -1.0].into_iter().enumerate() {
                let mut ui = u.clone();
                ui[i] += sa * du;
                let (ze, pe) = self.run(&ui, s_f, i, zs[i], Some((&mut zi, &mut pi)));
                single[i][a] = lag(&ze, ps[i] + pe);
                for j in i + 1..n {
                    for (b, sb) in [1.0, -1.0].into_iter().enumerate() {
                        let mut uij = ui.clone();
                        uij[j] += sb * du;
                        let (ze, pe) = self.run(&uij, s_f, j, zi[j], None);
                        pair[j][a][b] = lag(&ze, ps[i] + pi[j] + pe);
                    }
                }
            }
            h[(i, i)] = (single[i][0] - 2.0 * l0 + single[i][1]) / (d * d);
            for j in i + 1..n {
                let v = (pair[j][0][0] - pair[j][0][1] - pair[j][1][0] + pair[j][1][1]) / (4.0 * d * d);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        // The length variable touches every interval, so its rows use full integrations.
        let full = |dw: &[(usize, f64)]| {
            let mut wp = w.to_vec();
            for &(k, v) in dw {
                wp[k] += v;
            }
            let (f, c) = self.eval(&wp);
            f + (0..7).map(|i| lam[i] * c[i]).sum::<f64>()
        };
        h[(n, n)] = (full(&[(n, d)]) - 2.0 * l0 + full(&[(n, -d)])) / (d * d);
        for i in 0..n {
            let v = (full(&[(i, d), (n, d)]) - full(&[(i, d), (n, -d)]) - full(&[(i, -d), (n, d)]) + full(&[(i, -d), (n, -d)])) / (4.0 * d * d);
            h[(i, n)] = v;
            h[(n, i)] = v;
        }
        h
    }
}

fn l1(c: &[f64; 7]) -> f64 {
    c.iter().map(|x| x.abs()).sum()
}

fn linf(c: &[f64; 7]) -> f64 {
    c.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solve the KKT system of the equality-constrained QP; returns (step, multipliers).
fn kkt(b: &DMatrix<f64>, jac: &DMatrix<f64>, g: &DVector<f64>, c: &[f64; 7]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = b.nrows();
    let mut k = DMatrix::zeros(n + 7, n + 7);
    k.view_mut((0, 0), (n, n)).copy_from(b);
    k.view_mut((0, n), (n, 7)).copy_from(&jac.transpose());
    k.view_mut((n, 0), (7, n)).copy_from(jac);
    let mut rhs = DVector::zeros(n + 7);
    rhs.rows_mut(0, n).copy_from(&(-g));
    for i in 0..7 {
        rhs[n + i] = -c[i];
    }
    let sol = k.lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, 7).into_owned()))
}

/// Minimise the primitive cost from `start` to `target` in forward motion,
/// starting from controls `u0` over length `s0`.
///
/// The SQP runs on a coarse integration grid; the result is then made exactly
/// feasible on the final grid by minimum-norm Newton steps on the terminal constraints.
pub fn solve_ocp(
    start: &AugmentedState,
    target: &AugmentedState,
    weights: &CostWeights,
    params: &VehicleParams,
    settings: &OcpSettings,
    u0: &[f64],
    s0: f64,
) -> Result<OcpSolution> {
    let n = u0.len();
    if n == 0 || !(s0 > 0.0) {
        return Err(Error::InvalidParameter("empty initial guess".into()));
    }
    let a = start.to_array();
    let mut sh = Shooter {
        z0: [a[0], a[1], a[2], a[3], a[4], a[5], a[6], 0.0],
        target: target.to_array(),
        w: *weights,
        p: params,
        n,
        m: substeps(s0, n, settings.coarse_step),
        alpha_lim: settings.tightening * params.alpha_max - 2e-3,
        penalty: settings.penalty,
        u_scale: 0.1 * n as f64 / (s0 * s0),
        s_ref: s0,
    };
    let w0: Vec<f64> = u0.iter().map(|u| u / sh.u_scale).chain(std::iter::once(0.0)).collect();
    let sqp = sqp(&sh, w0, settings)?;
    let mut w = sqp.w;
    for _ in 0..3 {
        sh.m = substeps(sh.decode(&w).1, n, settings.max_step);
        w = polish(&sh, w, settings.tol_feas)?;
        let (_, s_f) = sh.decode(&w);
        if s_f / (n * sh.m) as f64 <= settings.max_step * (1.0 + 1e-9) {
            let (_, c) = sh.eval(&w);
            let mut sol = finish(&sh, &w, &c, sqp.stationarity, sqp.iterations);
            sol.converged = sqp.converged;
            return Ok(sol);
        }
    }
    Err(Error::NotConverged { violation: f64::NAN })
}

/// Make `u` over `s_f` meet the terminal constraints by minimum-norm corrections,
/// without optimising. Used to build feasible neighbours of a solution.
#[allow(clippy::too_many_arguments)]
pub fn restore_feasibility(
    start: &AugmentedState,
    target: &AugmentedState,
    weights: &CostWeights,
    params: &VehicleParams,
    settings: &OcpSettings,
    u: &[f64],
    s_f: f64,
    substeps: usize,
) -> Result<OcpSolution> {
    let n = u.len();
    let a = start.to_array();
    let sh = Shooter {
        z0: [a[0], a[1], a[2], a[3], a[4], a[5], a[6], 0.0],
        target: target.to_array(),
        w: *weights,
        p: params,
        n,
        m: substeps,
        alpha_lim: settings.tightening * params.alpha_max - 2e-3,
        penalty: settings.penalty,
        u_scale: 0.1 * n as f64 / (s_f * s_f),
        s_ref: s_f,
    };
    let w0: Vec<f64> = u.iter().map(|x| x / sh.u_scale).chain(std::iter::once(0.0)).collect();
    let w = polish(&sh, w0, settings.tol_feas)?;
    let (_, c) = sh.eval(&w);
    let mut sol = finish(&sh, &w, &c, f64::NAN, 0);
    sol.converged = false;
    Ok(sol)
}

fn substeps(s: f64, n: usize, max_step: f64) -> usize {
    ((s / (n as f64 * max_step)) - 1e-9).ceil().max(1.0) as usize
}

struct SqpOutcome {
    w: Vec<f64>,
    stationarity: f64,
    iterations: usize,
    converged: bool,
}

/// Largest terminal violation handed on to the feasibility polish.
const POLISH_ENTRY: f64 = 1e-3;

fn sqp(sh: &Shooter, w0: Vec<f64>, settings: &OcpSettings) -> Result<SqpOutcome> {
    let n = sh.n;
    let mut w = w0;
    let (mut f, mut c, mut g, mut jac) = sh.eval_with_derivatives(&w);
    if !f.is_finite() {
        return Err(Error::Infeasible("initial guess leaves the state space".into()));
    }
    let nv = n + 1;
    // Least-squares multiplier estimate for the first Hessian.
    let mut lam = {
        let jjt = &jac * jac.transpose();
        jjt.lu().solve(&(-(&jac * &g))).unwrap_or_else(|| DVector::zeros(7))
    };
    // Per-constraint merit weights; the terminal sensitivities differ by orders of magnitude.
    let mut mu = [1.0f64; 7];
    let mut stationarity = f64::INFINITY;
    let trace = std::env::var_os("G2T_OCP_TRACE").is_some();
    let stop = |w: Vec<f64>, c: &[f64; 7], stationarity: f64, iterations: usize, converged: bool| {
        if linf(c) <= POLISH_ENTRY {
            Ok(SqpOutcome { w, stationarity, iterations, converged })
        } else {
            Err(Error::NotConverged { violation: linf(c) })
        }
    };
    for it in 0..settings.max_iter {
        if trace {
            eprintln!("it {it} f {f:.6} |c| {:.3e} stat {stationarity:.3e}", linf(&c));
        }
        let b = convexify(sh.lagrangian_hessian(&w, &lam), &jac);
        let Some((d, lam_new)) = kkt(&b, &jac, &g, &c) else {
            return stop(w, &c, stationarity, it, false);
        };
        lam = lam_new;
        stationarity = (&g + jac.transpose() * &lam).amax();
        if linf(&c) <= settings.coarse_tol_feas && stationarity <= settings.tol_opt {
            return stop(w, &c, stationarity, it, true);
        }
        for i in 0..7 {
            mu[i] = mu[i].max(1.5 * lam[i].abs() + 1e-3);
        }
        let merit = |f: f64, c: &[f64; 7]| f + (0..7).map(|i| mu[i] * c[i].abs()).sum::<f64>();
        let phi0 = merit(f, &c);
        let dphi = g.dot(&d) - (phi0 - f);
        let eta = 1e-4;
        let trial = |step: &DVector<f64>| -> (Vec<f64>, f64, [f64; 7]) {
            let wt: Vec<f64> = w.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (ft, ct) = sh.eval(&wt);
            (wt, ft, ct)
        };
        let mut accepted: Option<Vec<f64>> = None;
        let (w1, f1, c1) = trial(&d);
        if merit(f1, &c1) <= phi0 + eta * dphi {
            accepted = Some(w1);
        } else if c1.iter().all(|x| x.is_finite()) {
            // Second-order correction against the Maratos effect.
            if let Some((dc, _)) = kkt(&b, &jac, &DVector::zeros(nv), &c1) {
                let (w2, f2, c2) = trial(&(&d + dc));
                if merit(f2, &c2) <= phi0 + eta * dphi {
                    accepted = Some(w2);
                }
            }
        }
        if accepted.is_none() {
            let mut tstep = 0.5;
            while tstep > 1e-10 {
                let (wt, ft, ct) = trial(&(&d * tstep));
                if merit(ft, &ct) <= phi0 + eta * tstep * dphi {
                    accepted = Some(wt);
                    break;
                }
                tstep *= 0.5;
            }
        }
        let Some(w_new) = accepted else {
            return stop(w, &c, stationarity, it, false);
        };
        let (f_n, c_n, g_n, jac_n) = sh.eval_with_derivatives(&w_new);
        w = w_new;
        f = f_n;
        c = c_n;
        g = g_n;
        jac = jac_n;
    }
    log::debug!("OCP stopped at iteration limit, stationarity {stationarity:.2e}");
    stop(w, &c, stationarity, settings.max_iter, false)
}

/// Gauss-Newton minimum-norm steps on the terminal constraints alone.
fn polish(sh: &Shooter, mut w: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
    for _ in 0..40 {
        let (_, c, _, jac) = sh.eval_with_derivatives(&w);
        let v = linf(&c);
        if v <= tol {
            return Ok(w);
        }
        if !v.is_finite() {
            break;
        }
        let jjt = &jac * jac.transpose();
        let cv = DVector::from_column_slice(&c);
        let Some(y) = jjt.lu().solve(&cv) else { break };
        let d = -(jac.transpose() * y);
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-6 {
            let wt: Vec<f64> = w.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            let (_, ct) = sh.eval(&wt);
            if l1(&ct) < (1.0 - 1e-4 * t) * l1(&c) {
                next = Some(wt);
                break;
            }
            t *= 0.5;
        }
        match next {
            Some(wt) => w = wt,
            None => break,
        }
    }
    let (_, c) = sh.eval(&w);
    if linf(&c) <= tol {
        Ok(w)
    } else {
        Err(Error::NotConverged { violation: linf(&c) })
    }
}

/// Shift the Hessian until it is positive definite on the null space of the constraint Jacobian.
fn convexify(mut h: DMatrix<f64>, jac: &DMatrix<f64>) -> DMatrix<f64> {
    let nv = h.nrows();
    let Some(inv) = (jac * jac.transpose()).try_inverse() else { return h };
    let proj = DMatrix::identity(nv, nv) - jac.transpose() * inv * jac;
    let eig = proj.symmetric_eigen();
    let cols: Vec<_> = (0..nv).filter(|&k| eig.eigenvalues[k] > 0.5).map(|k| eig.eigenvectors.column(k).into_owned()).collect();
    if cols.is_empty() {
        return h;
    }
    let z = DMatrix::from_columns(&cols);
    let min_eig = (z.transpose() * &h * &z).symmetric_eigenvalues().min();
    let floor = 1e-6 * h.diagonal().amax().max(1e-8);
    if min_eig < floor {
        for i in 0..nv {
            h[(i, i)] += floor - min_eig;
        }
    }
    h
}

fn finish(sh: &Shooter, w: &[f64], c: &[f64; 7], stationarity: f64, iterations: usize) -> OcpSolution {
    let (u, s_f) = sh.decode(w);
    let (z, _) = sh.run(&u, s_f, 0, sh.z0, None);
    OcpSolution { u, s_f, substeps: sh.m, cost: z[7], violation: linf(c), stationarity, iterations, converged: true }
}

/// Cost of the forward trajectory from `start` under `u` over `s_f` with `m` substeps per interval.
pub fn shooting_cost(start: &AugmentedState, u: &[f64], s_f: f64, m: usize, weights: &CostWeights, params: &VehicleParams) -> (AugmentedState, f64) {
    let a = start.to_array();
    let sh = Shooter {
        z0: [a[0], a[1], a[2], a[3], a[4], a[5], a[6], 0.0],
        target: [0.0; 7],
        w: *weights,
        p: params,
        n: u.len(),
        m,
        alpha_lim: f64::INFINITY,
        penalty: 0.0,
        u_scale: 1.0,
        s_ref: s_f,
    };
    let (z, _) = sh.run(u, s_f, 0, sh.z0, None);
    (AugmentedState::from_array(&[z[0], z[1], z[2], z[3], z[4], z[5], z[6]]), z[7])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle_model::equilibrium_state;

    #[test]
    fn straight_one_metre() {
        let p = VehicleParams::default();
        let s = equilibrium_state(0.0, 0.0, 0.0, 0.0, &p).unwrap();
        let t = equilibrium_state(1.0, 0.0, 0.0, 0.0, &p).unwrap();
        let sol = solve_ocp(&s, &t, &CostWeights::forward(), &p, &OcpSettings::default(), &[0.0; 10], 1.2).unwrap();
        assert!((sol.s_f - 1.0).abs() < 1e-8, "{}", sol.s_f);
        assert!((sol.cost - 1.0).abs() < 1e-8);
        assert!(sol.u.iter().all(|u| u.abs() < 1e-6));
    }

    #[test]
    fn lateral_shift_is_feasible_and_costly() {
        let p = VehicleParams::default();
        let s = equilibrium_state(0.0, 0.0, 0.0, 0.0, &p).unwrap();
        let t = equilibrium_state(30.0, 1.0, 0.0, 0.0, &p).unwrap();
        let sol = solve_ocp(&s, &t, &CostWeights::forward(), &p, &OcpSettings::default(), &[0.0; 30], 30.0).unwrap();
        let path = sol.path(&s, &p).unwrap();
        let end = path.last().to_array();
        let tt = t.to_array();
        for i in 0..7 {
            assert!((end[i] - tt[i]).abs() < 1e-6, "component {i}: {} vs {}", end[i], tt[i]);
        }
        assert!(sol.cost >= sol.s_f && sol.s_f >= 29.0);
    }
}
