//! Quadratic Lyapunov certificates for the path-following modes and for the
//! switched sequence of primitives.
//!
//! Both searches look for a symmetric matrix `P` inside an eigenvalue box
//! that makes a family of linear matrix maps negative semidefinite. They run
//! cyclic subgradient projections (Polyak steps on the largest eigenvalue
//! of each violated constraint, followed by eigenvalue clipping onto the
//! box). Every candidate is re-checked by direct eigenvalue evaluation, so
//! soundness never rests on the search itself.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Tolerance of the independent re-check.
pub const RECHECK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Refutation {
    /// A matrix in the convex hull of the vertices has spectral abscissa above `-epsilon`.
    UnstableCombination { vertices: (usize, usize), weight: f64, abscissa: f64 },
    /// A product of transition matrices with spectral radius at least one.
    UnstableProduct { indices: Vec<usize>, spectral_radius: f64 },
    /// A single transition matrix contracts slower than the required rate.
    SlowContraction { index: usize, spectral_radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Certified(Matrix4<f64>),
    Refuted(Refutation),
    /// Search budget exhausted. `worst` is the largest remaining constraint eigenvalue.
    Inconclusive { worst_vertex: usize, worst: f64 },
}

fn sym(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn top_eig(m: &Matrix4<f64>) -> (f64, Vector4<f64>) {
    let e = SymmetricEigen::new(sym(m));
    let (mut k, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..4 {
        if e.eigenvalues[i] > best {
            best = e.eigenvalues[i];
            k = i;
        }
    }
    (best, e.eigenvectors.column(k).into_owned())
}

fn clip(p: &Matrix4<f64>, lo: f64, hi: f64) -> Matrix4<f64> {
    let mut e = SymmetricEigen::new(sym(p));
    for i in 0..4 {
        e.eigenvalues[i] = e.eigenvalues[i].clamp(lo, hi);
    }
    sym(&e.recompose())
}

/// A family of linear maps `P -> M_j(P)` with the adjoint applied to rank-one
/// matrices, as needed for the subgradient step.
trait LmiFamily {
    fn len(&self) -> usize;
    fn eval(&self, j: usize, p: &Matrix4<f64>) -> Matrix4<f64>;
    /// Gradient of `v^T M_j(P) v` with respect to `P`.
    fn grad(&self, j: usize, v: &Vector4<f64>) -> Matrix4<f64>;
}

struct ContinuousFamily<'a> {
    a: &'a [Matrix4<f64>],
    eps: f64,
}

impl LmiFamily for ContinuousFamily<'_> {
    fn len(&self) -> usize {
        self.a.len()
    }
    fn eval(&self, j: usize, p: &Matrix4<f64>) -> Matrix4<f64> {
        self.a[j].transpose() * p + p * self.a[j] + p * (2.0 * self.eps)
    }
    fn grad(&self, j: usize, v: &Vector4<f64>) -> Matrix4<f64> {
        let w = self.a[j] * v;
        w * v.transpose() + v * w.transpose() + v * v.transpose() * (2.0 * self.eps)
    }
}

struct DiscreteFamily<'a> {
    f: &'a [Matrix4<f64>],
    rate: f64,
}

impl LmiFamily for DiscreteFamily<'_> {
    fn len(&self) -> usize {
        self.f.len()
    }
    fn eval(&self, j: usize, p: &Matrix4<f64>) -> Matrix4<f64> {
        self.f[j].transpose() * p * self.f[j] - p * self.rate
    }
    fn grad(&self, j: usize, v: &Vector4<f64>) -> Matrix4<f64> {
        let w = self.f[j] * v;
        w * w.transpose() - v * v.transpose() * self.rate
    }
}

/// Largest constraint eigenvalue over the family, and where it occurs.
fn worst<F: LmiFamily>(fam: &F, p: &Matrix4<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..fam.len() {
        let (l, _) = top_eig(&fam.eval(j, p));
        if l > best.1 {
            best = (j, l);
        }
    }
    best
}

/// Find `P` with eigenvalues in `[1, hi]` and `M_j(P) <= -margin` for all `j`.
fn project_search<F: LmiFamily>(fam: &F, p0: &Matrix4<f64>, hi: f64, margin: f64, sweeps: usize) -> Result<Matrix4<f64>, (usize, f64)> {
    let mut p = clip(p0, 1.0, hi);
    let mut last = (0, f64::INFINITY);
    for _ in 0..sweeps {
        let mut violated = false;
        for j in 0..fam.len() {
            let (l, v) = top_eig(&fam.eval(j, &p));
            if l > -margin {
                violated = true;
                let g = sym(&fam.grad(j, &v));
                let gn = g.norm_squared();
                if gn > 0.0 {
                    // Slight over-relaxation moves the iterate into the interior.
                    p -= g * (1.5 * (l + 2.0 * margin) / gn);
                }
            }
        }
        p = clip(&p, 1.0, hi);
        if !violated {
            let w = worst(fam, &p);
            if w.1 <= -margin {
                return Ok(p);
            }
            last = w;
        } else {
            last = (0, f64::INFINITY);
        }
    }
    let w = worst(fam, &p);
    if w.1 <= -margin {
        return Ok(p);
    }
    Err(if last.1.is_finite() { last } else { w })
}

/// Maximum eigenvalue of `A^T P + P A + 2 eps P` over the vertices.
pub fn continuous_residual(a_cl: &[Matrix4<f64>], p: &Matrix4<f64>, eps: f64) -> f64 {
    worst(&ContinuousFamily { a: a_cl, eps }, p).1
}

/// Maximum eigenvalue of `F^T S F - (1 - mu) S` over the set.
pub fn discrete_residual(f: &[Matrix4<f64>], s: &Matrix4<f64>, mu: f64) -> f64 {
    worst(&DiscreteFamily { f, rate: 1.0 - mu }, s).1
}

fn to_d(m: &Matrix4<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_column_slice(4, 4, m.as_slice())
}

fn from_d(m: &nalgebra::DMatrix<f64>) -> Matrix4<f64> {
    Matrix4::from_column_slice(m.as_slice())
}

fn abscissa(m: &Matrix4<f64>) -> f64 {
    linalg::spectral_abscissa(&to_d(m))
}

/// Search for a common `P >= I` with `A_j^T P + P A_j <= -2 eps P` at every vertex.
pub fn common_lyapunov(a_cl: &[Matrix4<f64>], eps: f64) -> SearchOutcome {
    assert!(!a_cl.is_empty());
    // Necessary condition per vertex.
    for (j, a) in a_cl.iter().enumerate() {
        let ab = abscissa(a);
        if ab > -eps {
            return SearchOutcome::Refuted(Refutation::UnstableCombination { vertices: (j, j), weight: 1.0, abscissa: ab });
        }
    }
    let fam = ContinuousFamily { a: a_cl, eps };
    let margin = 1e-7;
    let shifted = |a: &Matrix4<f64>| a + Matrix4::identity() * eps;
    // Candidates: Lyapunov solutions of the mean vertex and of a few samples.
    let mut seeds = Vec::new();
    let mean = a_cl.iter().fold(Matrix4::zeros(), |acc, a| acc + a) / a_cl.len() as f64;
    seeds.push(mean);
    for &i in &[0, a_cl.len() / 2, a_cl.len() - 1] {
        seeds.push(a_cl[i]);
    }
    let mut best_err = (0, f64::INFINITY);
    for a in seeds {
        let Ok(p) = linalg::lyapunov_continuous(&to_d(&shifted(&a)), &nalgebra::DMatrix::identity(4, 4)) else {
            continue;
        };
        let p = from_d(&p);
        let lmin = linalg::min_eigenvalue_sym(&to_d(&p));
        if !(lmin > 0.0) {
            continue;
        }
        let p = p / lmin;
        let w = worst(&fam, &p);
        if w.1 <= -margin {
            return SearchOutcome::Certified(p);
        }
        match project_search(&fam, &p, f64::INFINITY, margin, 2000) {
            Ok(p) => return SearchOutcome::Certified(p),
            Err(e) if e.1 < best_err.1 => best_err = e,
            Err(_) => {}
        }
    }
    if let Some(r) = refute_hull(a_cl, eps) {
        return SearchOutcome::Refuted(r);
    }
    SearchOutcome::Inconclusive { worst_vertex: best_err.0, worst: best_err.1 }
}

/// Look for an unstable matrix in the convex hull of vertex pairs.
fn refute_hull(a_cl: &[Matrix4<f64>], eps: f64) -> Option<Refutation> {
    // Subsample long vertex lists; the check is a sufficient refutation only.
    let step = (a_cl.len() / 24).max(1);
    let idx: Vec<usize> = (0..a_cl.len()).step_by(step).collect();
    for (ii, &i) in idx.iter().enumerate() {
        for &j in &idx[ii + 1..] {
            for k in 1..20 {
                let t = k as f64 / 20.0;
                let m = a_cl[i] * (1.0 - t) + a_cl[j] * t;
                let ab = abscissa(&m);
                if ab > -eps {
                    return Some(Refutation::UnstableCombination { vertices: (i, j), weight: t, abscissa: ab });
                }
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedSolution {
    pub s: Matrix4<f64>,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SwitchedOutcome {
    Certified(SwitchedSolution),
    Refuted(Refutation),
    Inconclusive { worst: f64 },
}

/// Search for `I <= S <= eta I` with `F_j^T S F_j - S <= -mu S`, minimising
/// `eta` by bisection.
pub fn switched_lyapunov(f: &[Matrix4<f64>], mu: f64, seed: u64) -> SwitchedOutcome {
    assert!(!f.is_empty() && mu > 0.0 && mu < 1.0);
    let rate = 1.0 - mu;
    for (j, fj) in f.iter().enumerate() {
        let rho = linalg::spectral_radius(&to_d(fj));
        if rho * rho > rate {
            return SwitchedOutcome::Refuted(Refutation::SlowContraction { index: j, spectral_radius: rho });
        }
    }
    if let Some(r) = refute_products(f, seed) {
        return SwitchedOutcome::Refuted(r);
    }
    let fam = DiscreteFamily { f, rate };
    let margin = 1e-7;
    let first = match sum_seed(f, rate) {
        Some(s) if worst(&fam, &s).1 <= -margin => s,
        _ => {
            // Fall back to the discrete Lyapunov solution of the scaled mean map.
            let scale = 1.0 / rate.sqrt();
            let mut seed_s = Matrix4::identity();
            let mean = f.iter().fold(Matrix4::zeros(), |acc, m| acc + m) / f.len() as f64 * scale;
            if let Ok(s) = linalg::lyapunov_discrete(&to_d(&mean), &nalgebra::DMatrix::identity(4, 4)) {
                let s = from_d(&s);
                let lmin = linalg::min_eigenvalue_sym(&to_d(&s));
                if lmin > 0.0 {
                    seed_s = s / lmin;
                }
            }
            match project_search(&fam, &seed_s, f64::INFINITY, margin, 20_000) {
                Ok(s) => s,
                Err(e) => return SwitchedOutcome::Inconclusive { worst: e.1 },
            }
        }
    };
    let mut best = first;
    let mut hi = linalg::symmetrize(&to_d(&first)).symmetric_eigenvalues().max();
    let mut lo = 1.0;
    for _ in 0..40 {
        if hi - lo < 1e-3 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match project_search(&fam, &best, mid, margin, 3000) {
            Ok(s) => {
                hi = linalg::symmetrize(&to_d(&s)).symmetric_eigenvalues().max().min(mid);
                best = s;
            }
            Err(_) => lo = mid,
        }
    }
    SwitchedOutcome::Certified(SwitchedSolution { s: best, eta: hi })
}

/// Solve `S = I + (1/rate) sum_j F_j^T S F_j`. When the solution is positive
/// definite it satisfies `F_j^T S F_j <= rate (S - I)` for every `j`.
fn sum_seed(f: &[Matrix4<f64>], rate: f64) -> Option<Matrix4<f64>> {
    let mut m = nalgebra::DMatrix::<f64>::identity(16, 16);
    for fj in f {
        let ft = to_d(&fj.transpose());
        m -= ft.kronecker(&ft) / rate;
    }
    let rhs = nalgebra::DVector::from_column_slice(Matrix4::<f64>::identity().as_slice());
    let x = m.lu().solve(&rhs)?;
    let s = sym(&Matrix4::from_column_slice(x.as_slice()));
    let lmin = SymmetricEigen::new(s).eigenvalues.min();
    (lmin >= 1.0 - 1e-9).then(|| s / lmin.min(1.0))
}

/// Randomised search for products of transition matrices with spectral radius >= 1.
fn refute_products(f: &[Matrix4<f64>], seed: u64) -> Option<Refutation> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..500 {
        let m = rng.gen_range(1..=8);
        let idx: Vec<usize> = (0..m).map(|_| rng.gen_range(0..f.len())).collect();
        let prod = idx.iter().fold(Matrix4::identity(), |acc, &i| f[i] * acc);
        let rho = linalg::spectral_radius(&to_d(&prod));
        if rho >= 1.0 {
            return Some(Refutation::UnstableProduct { indices: idx, spectral_radius: rho });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stable_vertex_certifies() {
        let a = Matrix4::from_diagonal(&Vector4::new(-1.0, -2.0, -0.5, -3.0));
        match common_lyapunov(&[a], 0.01) {
            SearchOutcome::Certified(p) => assert!(continuous_residual(&[a], &p, 0.01) <= RECHECK_TOL),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn unstable_vertex_is_refuted() {
        let a = Matrix4::from_diagonal(&Vector4::new(-1.0, 0.2, -0.5, -3.0));
        assert!(matches!(common_lyapunov(&[a], 0.01), SearchOutcome::Refuted(_)));
    }

    #[test]
    fn opposite_pair_is_refuted() {
        let a = Matrix4::from_diagonal(&Vector4::new(-1.0, -2.0, -0.5, -3.0)) + Matrix4::from_fn(|i, j| if j == i + 1 { 1.0 } else { 0.0 });
        assert!(matches!(common_lyapunov(&[a, -a], 0.01), SearchOutcome::Refuted(_)));
    }

    #[test]
    fn needs_projection_beyond_seed() {
        // Feasible pair: P = diag(1, d, 1, 1) works for d in (0.9025, 1.78).
        let mut a1 = Matrix4::identity() * -1.0;
        let mut a2 = a1;
        a1[(0, 1)] = 1.5;
        a2[(1, 0)] = 1.9;
        match common_lyapunov(&[a1, a2], 0.01) {
            SearchOutcome::Certified(p) => assert!(continuous_residual(&[a1, a2], &p, 0.01) <= RECHECK_TOL),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn scaled_identity_switched() {
        let f = [Matrix4::identity() * 0.5];
        match switched_lyapunov(&f, 0.3, 1) {
            SwitchedOutcome::Certified(sol) => {
                assert!((sol.eta - 1.0).abs() < 1e-2);
                assert!(discrete_residual(&f, &sol.s, 0.3) <= RECHECK_TOL);
            }
            o => panic!("{o:?}"),
        }
        assert!(matches!(switched_lyapunov(&f, 0.8, 1), SwitchedOutcome::Refuted(_)));
    }
}
