//! Acceptance checks. Each returns a verdict with the measured numbers.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{Matrix4, SymmetricEigen, Vector4, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use g2t_core::lattice_planner::{heuristic, FootprintConfig, Hlut, OccupancyGrid, PlanSettings, Planner};
use g2t_core::observer::{
    add_outliers, h_loc, h_loc_jacobian, h_ran, h_ran_jacobian, initial_state, iterative_ransac, predict_jacobians,
    predict_mean, simulate_point_cloud, LidarConfig, RansacConfig,
};
use g2t_core::path_following::lyapunov::common_lyapunov;
use g2t_core::path_following::{
    closed_loop_vertices, lqr_gain, straight_line_matrices, verify_mode, HybridGains, LqWeights, ModeVerdict, NominalPath,
    SearchOutcome,
};
use g2t_core::primitive_gen::{path_cost, CostWeights, LatticeState, Library};
use g2t_core::vehicle_model::{equilibrium_angles, equilibrium_state, integrate, reverse_path, wrap_angle};
use g2t_core::{AugmentedState, ControlProfile, Direction, VehicleParams, VehicleState};

use crate::repro;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {} ({:.2} s of {:.0} s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.limit_seconds,
            self.detail
        )
    }
}

/// Time `body`; the verdict passes only if the body does and the time limit holds.
pub fn timed(id: u8, name: &'static str, limit: Duration, body: impl FnOnce() -> anyhow::Result<(bool, String)>) -> Verdict {
    let t = Instant::now();
    let (ok, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    let el = t.elapsed();
    let detail = if el > limit { format!("{detail}; over the time limit") } else { detail };
    Verdict { id, name, pass: ok && el <= limit, detail, seconds: el.as_secs_f64(), limit_seconds: limit.as_secs_f64() }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub fn lqr_gains(p: &VehicleParams) -> Verdict {
    timed(1, "LQR gain reproduction", secs(1), || {
        let (a, b) = straight_line_matrices(p);
        let w = LqWeights::default();
        let q = |d: [f64; 4]| Matrix4::from_diagonal(&Vector4::from(d));
        let k_rev = lqr_gain(&(-a), &(-b), &q(w.q_rev), w.r)?;
        let k_fwd = lqr_gain(&a, &b, &q(w.q_fwd), w.r)?;
        let want_rev = [-0.12, 1.67, -1.58, 0.64];
        let want_fwd = [-0.20, -2.95, -1.65, -1.22];
        let dev = (0..4).map(|i| (k_rev[i] - want_rev[i]).abs().max((k_fwd[i] - want_fwd[i]).abs())).fold(0.0, f64::max);
        let fmt = |k: &nalgebra::RowVector4<f64>| format!("[{:.3}, {:.3}, {:.3}, {:.3}]", k[0], k[1], k[2], k[3]);
        Ok((dev <= 0.01, format!("K_rev {} K_fwd {} max deviation {dev:.4}", fmt(&k_rev), fmt(&k_fwd))))
    })
}

/// Random feasible two- or three-segment path in one direction.
fn random_path(rng: &mut ChaCha8Rng, p: &VehicleParams) -> Option<g2t_core::SampledPath> {
    let dir = if rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward };
    let alpha = rng.gen_range(-0.3..0.3);
    let z0 = if rng.gen_bool(0.5) {
        equilibrium_state(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-3.0..3.0), alpha, p).ok()?
    } else {
        AugmentedState::new(
            VehicleState::new(0.0, 0.0, rng.gen_range(-3.0..3.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
            alpha,
            rng.gen_range(-0.1..0.1),
        )
    };
    let mut prof = ControlProfile::default();
    for _ in 0..rng.gen_range(2..=3) {
        prof.push(dir, rng.gen_range(-0.2..0.2), rng.gen_range(1.0..6.0));
    }
    integrate(&z0, &prof, 0.01, p).ok()
}

pub fn symmetry(p: &VehicleParams) -> Verdict {
    timed(2, "Symmetry suite", secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut end_err, mut cost_err, mut n, mut tries) = (0.0f64, 0.0f64, 0, 0);
        while n < 100 {
            tries += 1;
            anyhow::ensure!(tries < 10_000, "could not draw feasible paths");
            let Some(path) = random_path(&mut rng, p) else { continue };
            let rev = reverse_path(&path);
            let mut prof = ControlProfile::default();
            for (k, c) in rev.controls.iter().enumerate() {
                prof.push(c.v, c.u_omega, rev.s[k + 1] - rev.s[k]);
            }
            let replay = integrate(&rev.states[0], &prof, 0.01, p)?;
            anyhow::ensure!(replay.states.len() == rev.states.len(), "replay sampled differently");
            for (za, zb) in replay.states.iter().zip(&rev.states) {
                let (a, b) = (za.to_array(), zb.to_array());
                for i in 0..7 {
                    end_err = end_err.max((a[i] - b[i]).abs());
                }
            }
            let w = match path.controls[0].v {
                Direction::Forward => CostWeights::forward(),
                Direction::Backward => CostWeights::backward(),
            };
            cost_err = cost_err.max((path_cost(&replay, &w) - path_cost(&path, &w)).abs());
            n += 1;
        }
        Ok((end_err < 1e-6 && cost_err < 1e-8, format!("100 paths: reversed replay error {end_err:.2e}, cost difference {cost_err:.2e}")))
    })
}

pub fn equilibria(p: &VehicleParams) -> Verdict {
    timed(3, "Equilibrium suite", secs(5), || {
        let mut worst = 0.0f64;
        for a in [-0.1, -0.05, -0.02, 0.02, 0.05, 0.1] {
            let (b3, b2) = equilibrium_angles(a, p)?;
            for dir in [Direction::Forward, Direction::Backward] {
                let z0 = AugmentedState::new(VehicleState::new(0.0, 0.0, 0.0, b3, b2), a, 0.0);
                let path = integrate(&z0, &ControlProfile::constant(dir, 0.0, 100.0), 0.01, p)?;
                for z in &path.states {
                    worst = worst.max((z.state.beta3 - b3).abs()).max((z.state.beta2 - b2).abs());
                }
            }
        }
        Ok((worst < 1e-6, format!("max joint-angle drift over 100 m: {worst:.2e} rad")))
    })
}

/// Random 40 m x 40 m instance with box obstacles that keep both ends free.
fn random_instance(rng: &mut ChaCha8Rng, lib: &Library, hlut: &Hlut, p: &VehicleParams) -> Option<(OccupancyGrid, LatticeState, LatticeState)> {
    let fp = FootprintConfig::default();
    let start = LatticeState::new(rng.gen_range(4..14), rng.gen_range(14..26), 0, 1);
    let goal = LatticeState::new(rng.gen_range(4..16), rng.gen_range(12..28), [15u8, 0, 0, 1][rng.gen_range(0..4)], 1);
    let mut g = OccupancyGrid::new(0.5, 80, 80, [0.0, 0.0]).ok()?;
    let free = |g: &OccupancyGrid| {
        let pl = Planner::new(lib, Some(hlut), g, p, &fp);
        pl.state_free(&start) && pl.state_free(&goal)
    };
    if start == goal || !free(&g) {
        return None;
    }
    let mut placed = 0;
    for _ in 0..40 {
        if placed == 6 {
            break;
        }
        let (x, y) = (rng.gen_range(0..80usize), rng.gen_range(0..80usize));
        let (w, h) = (rng.gen_range(2..6usize), rng.gen_range(2..6usize));
        let mut g2 = g.clone();
        for i in x..(x + w).min(80) {
            for j in y..(y + h).min(80) {
                g2.set_occupied(i, j, true);
            }
        }
        if free(&g2) {
            g = g2;
            placed += 1;
        }
    }
    Some((g, start, goal))
}

pub fn planner_optimality(lib: &Library, hlut: &Hlut, p: &VehicleParams) -> Verdict {
    timed(4, "Planner optimality", secs(120), || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fp = FootprintConfig::default();
        let (mut done, mut tries, mut ok) = (0, 0, true);
        let mut notes = Vec::new();
        while done < 10 {
            tries += 1;
            anyhow::ensure!(tries < 1000, "could not draw solvable instances");
            let Some((g, start, goal)) = random_instance(&mut rng, lib, hlut, p) else { continue };
            let Ok(opt) = Planner::new(lib, Some(hlut), &g, p, &fp).optimal_cost(start, goal) else { continue };
            let out = Planner::new(lib, Some(hlut), &g, p, &fp)
                .plan_lattice(start, goal, &PlanSettings { max_time_ms: None, ..Default::default() })?;
            let costs: Vec<f64> = out.results.iter().map(|r| r.cost).collect();
            let bounded = out.results.iter().all(|r| r.cost <= r.gamma * opt * (1.0 + 1e-12));
            let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
            let last = out.results.last().map(|r| (r.gamma, r.cost));
            let exact = last == Some((1.0, opt));
            ok &= bounded && monotone && exact;
            if !(bounded && monotone && exact) {
                notes.push(format!("instance {done}: optimum {opt}, anytime {costs:?}"));
            }
            done += 1;
        }
        let detail = if ok { "10 instances: final cost equals the optimum exactly, anytime bounds hold".to_string() } else { notes.join("; ") };
        Ok((ok, detail))
    })
}

/// Uniform-cost search over the obstacle-free lattice, kept separate from the table builder.
fn uniform_cost(lib: &Library, start: LatticeState, cutoff: f64) -> HashMap<LatticeState, f64> {
    let key = |s: &LatticeState| (s.ix, s.iy, s.itheta, s.ialpha);
    let mut dist: HashMap<LatticeState, f64> = HashMap::from([(start, 0.0)]);
    let mut settled = HashMap::new();
    let mut open = BTreeSet::from([(0u64, key(&start))]);
    while let Some((bits, k)) = open.pop_first() {
        let g = f64::from_bits(bits);
        let s = LatticeState::new(k.0, k.1, k.2, k.3);
        if settled.contains_key(&s) {
            continue;
        }
        settled.insert(s, g);
        for m in lib.primitives.iter().filter(|m| (m.from.itheta, m.from.ialpha) == (s.itheta, s.ialpha)) {
            let t = LatticeState::new(s.ix + m.to.ix, s.iy + m.to.iy, m.to.itheta, m.to.ialpha);
            let gt = g + m.cost;
            if gt <= cutoff && !settled.contains_key(&t) && dist.get(&t).is_none_or(|&d| gt < d) {
                if let Some(d) = dist.insert(t, gt) {
                    open.remove(&(d.to_bits(), key(&t)));
                }
                open.insert((gt.to_bits(), key(&t)));
            }
        }
    }
    settled
}

pub fn hlut_exactness(lib: &Library, hlut: &Hlut) -> Verdict {
    timed(5, "HLUT exactness", secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let starts: Vec<LatticeState> =
            (0..4).map(|_| LatticeState::new(rng.gen_range(-50..50), rng.gen_range(-50..50), rng.gen_range(0..16), rng.gen_range(0..3))).collect();
        let searches: Vec<_> = starts.par_iter().map(|&s| uniform_cost(lib, s, hlut.cutoff)).collect();
        let (mut mismatches, mut inadmissible, mut pairs) = (0, 0, 0usize);
        for (s, costs) in starts.iter().zip(&searches) {
            let mut goals: Vec<_> = costs.iter().map(|(g, c)| (*g, *c)).collect();
            goals.sort_by_key(|(g, _)| (g.ix, g.iy, g.itheta, g.ialpha));
            for _ in 0..5 {
                let (g, c) = goals[rng.gen_range(0..goals.len())];
                if hlut.lookup(s, &g) != Some(c) {
                    mismatches += 1;
                }
            }
            for (g, c) in &goals {
                pairs += 1;
                if heuristic(s, g, Some(hlut)) > *c {
                    inadmissible += 1;
                }
            }
        }
        Ok((
            mismatches == 0 && inadmissible == 0,
            format!("20 queries, {mismatches} mismatches; heuristic above true cost on {inadmissible} of {pairs} pairs"),
        ))
    })
}

pub fn alternating_straights(p: &VehicleParams) -> Verdict {
    timed(6, "Alternating straights", secs(30), || {
        let r = repro::alternating_sequences(p)?;
        let v18 = &r.sequences[&18];
        let v1 = &r.sequences[&1];
        let dec18 = v18.windows(2).all(|w| w[1] < w[0]);
        let max1 = v1.iter().cloned().fold(0.0, f64::max);
        let mono1 = v1.windows(2).all(|w| w[1] < w[0]);
        let ok = dec18 && v18.len() == 31 && max1 < 3.0 * v1[0] && !mono1;
        Ok((
            ok,
            format!(
                "18 m: strictly decreasing {dec18} ({:.3} -> {:.3e}); 1 m: max/initial {:.2}, monotone {mono1}",
                v18[0],
                v18[v18.len() - 1],
                max1 / v1[0]
            ),
        ))
    })
}

pub fn mode_certificates(lib: &Library, p: &VehicleParams) -> Verdict {
    timed(7, "Mode certificates", secs(120), || {
        anyhow::ensure!(!lib.primitives.is_empty(), "empty library");
        let gains = HybridGains::design(p, &LqWeights::default())?;
        let eps = 0.01;
        let results: Vec<(u32, Option<f64>)> = lib
            .primitives
            .par_iter()
            .map(|m| {
                let path = NominalPath::from_sampled(&m.path, p, m.id as i64, 0.0, 0.0);
                let residual = match (verify_mode(&path, &gains, eps, p), closed_loop_vertices(&path, &gains, p)) {
                    (Ok(ModeVerdict::Certified(c)), Ok(verts)) => Some(vertex_residual(&verts, &c.p, eps)),
                    _ => None,
                };
                (m.id, residual)
            })
            .collect();
        let failed: Vec<u32> = results.iter().filter(|r| r.1.is_none_or(|x| x > 1e-9)).map(|r| r.0).collect();
        let worst = results.iter().filter_map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        Ok((
            failed.is_empty(),
            format!("{} of {} primitives certified, worst re-check eigenvalue {worst:.2e}; failing ids {failed:?}", results.len() - failed.len(), results.len()),
        ))
    })
}

/// Largest eigenvalue of `A^T P + P A + 2 eps P` over the vertices; infinite if `P` is not positive definite.
fn vertex_residual(verts: &[Matrix4<f64>], pm: &Matrix4<f64>, eps: f64) -> f64 {
    if SymmetricEigen::new(*pm).eigenvalues.min() <= 0.0 {
        return f64::INFINITY;
    }
    verts
        .iter()
        .map(|a| {
            let m = a.transpose() * pm + pm * a + 2.0 * eps * pm;
            SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.max()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn shared_certificate(p: &VehicleParams) -> Verdict {
    timed(8, "Shared certificate refutation", secs(10), || {
        let g = HybridGains::design(p, &LqWeights::default())?;
        let (a, b) = straight_line_matrices(p);
        let mut all = true;
        let mut notes = Vec::new();
        for (name, k, sign) in [("K_rev", g.k_rev, -1.0), ("K_fwd", g.k_fwd, 1.0)] {
            let acl = (a + b * k) * sign;
            let refuted = matches!(common_lyapunov(&[acl, -acl], 0.0), SearchOutcome::Refuted(_));
            // Independently: a stable A_cl makes -A_cl unstable, so no common P can exist.
            let abscissa = |m: Matrix4<f64>| m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let split = abscissa(acl) < 0.0 && abscissa(-acl) > 0.0;
            all &= refuted && split;
            notes.push(format!("{name}: search refuted {refuted}, A_cl stable and -A_cl unstable {split}"));
        }
        Ok((all, notes.join(", ")))
    })
}

pub fn convergence() -> Verdict {
    timed(9, "Closed-loop convergence", secs(60), || {
        let runs = repro::convergence_runs()?;
        let mut ok = true;
        let mut notes = Vec::new();
        for r in &runs {
            let m = &r.output.metrics;
            let good = r.output.failure.is_none() && m.settle_fraction.is_some_and(|f| f < 0.8) && m.s_tilde_increasing;
            ok &= good;
            notes.push(format!(
                "{}: settled at {:.1} % of the path, s~ increasing {}",
                r.name,
                100.0 * m.settle_fraction.unwrap_or(f64::NAN),
                m.s_tilde_increasing
            ));
        }
        Ok((ok, notes.join("; ")))
    })
}

fn random_state(rng: &mut ChaCha8Rng) -> Vector5<f64> {
    Vector5::new(
        rng.gen_range(-50.0..50.0),
        rng.gen_range(-50.0..50.0),
        rng.gen_range(-3.1..3.1),
        rng.gen_range(-0.7..0.7),
        rng.gen_range(-0.7..0.7),
    )
}

pub fn observer_round_trip(p: &VehicleParams) -> Verdict {
    timed(10, "Observer round trip", secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut inv = 0.0f64;
        for _ in 0..1000 {
            let x = random_state(&mut rng);
            let e = initial_state(&h_loc(&x, p), &h_ran(&x, p), p)?.to_vector();
            let mut d = e - x;
            d[2] = wrap_angle(d[2]);
            inv = inv.max(d.amax());
        }
        let mut jac = 0.0f64;
        let h = 1e-6;
        for _ in 0..200 {
            let x = random_state(&mut rng);
            let (v, k, ts) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.15..0.15), 0.01);
            let (f, g) = predict_jacobians(&x, v, k, ts, p);
            let (hl, hr) = (h_loc_jacobian(&x, p), h_ran_jacobian(&x, p));
            for j in 0..5 {
                let mut e = Vector5::zeros();
                e[j] = h;
                let df = (predict_mean(&(x + e), v, k, ts, p) - predict_mean(&(x - e), v, k, ts, p)) / (2.0 * h);
                let mut dl = (h_loc(&(x + e), p) - h_loc(&(x - e), p)) / (2.0 * h);
                dl[2] = wrap_angle(dl[2] * 2.0 * h) / (2.0 * h);
                let dr = (h_ran(&(x + e), p) - h_ran(&(x - e), p)) / (2.0 * h);
                jac = jac.max((df - f.column(j)).amax()).max((dl - hl.column(j)).amax()).max((dr - hr.column(j)).amax());
            }
            let dv = (predict_mean(&x, v + h, k, ts, p) - predict_mean(&x, v - h, k, ts, p)) / (2.0 * h);
            let dk = (predict_mean(&x, v, k + h, ts, p) - predict_mean(&x, v, k - h, ts, p)) / (2.0 * h);
            jac = jac.max((dv - g.column(0)).amax()).max((dk - g.column(1)).amax());
        }
        Ok((inv < 1e-9 && jac < 1e-6, format!("1000 states: inversion error {inv:.2e}; Jacobian deviation {jac:.2e}")))
    })
}

pub fn ransac(p: &VehicleParams) -> Verdict {
    timed(11, "RANSAC accuracy", secs(60), || {
        let lidar = LidarConfig::default();
        let cfg = RansacConfig::default();
        let joints = |rng: &mut ChaCha8Rng| {
            VehicleState::new(0.0, 0.0, 0.0, rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        };
        let errs = |s: &VehicleState, m: Option<g2t_core::observer::RansacMeasurement>| {
            let t = h_ran(&s.to_vector(), p);
            m.map_or((f64::INFINITY, f64::INFINITY), |m| ((m.ly - t[0]).abs(), (m.phi - t[1]).abs()))
        };
        let exact: Vec<(f64, f64)> = (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(110_000 + seed);
                let s = joints(&mut rng);
                let cloud = simulate_point_cloud(&s, p, &lidar, 0.0, &mut rng);
                errs(&s, iterative_ransac(&cloud, p, &lidar, &cfg, &mut rng))
            })
            .collect();
        let worst = exact.iter().map(|e| e.0.max(e.1)).fold(0.0, f64::max);
        let noisy: Vec<(f64, f64)> = (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(111_000 + seed);
                let s = joints(&mut rng);
                let mut cloud = simulate_point_cloud(&s, p, &lidar, 0.01, &mut rng);
                add_outliers(&mut cloud, 0.3, &lidar, 10.0, &mut rng);
                errs(&s, iterative_ransac(&cloud, p, &lidar, &cfg, &mut rng))
            })
            .collect();
        let p95 = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[94]
        };
        let ly = p95(noisy.iter().map(|e| e.0).collect());
        let phi = p95(noisy.iter().map(|e| e.1.to_degrees()).collect());
        Ok((
            worst < 1e-6 && ly < 0.02 && phi < 0.5,
            format!("noise-free worst {worst:.2e}; noisy 95th percentile |Ly| {:.2} cm, |phi| {phi:.3} deg", 100.0 * ly),
        ))
    })
}

pub fn noisy_tracking(jobs: usize) -> Verdict {
    timed(12, "End-to-end noisy tracking", secs(300), || {
        let s = repro::noisy_figure_eight(20, 0, jobs)?;
        let max_mean_z = s.runs.iter().map(|r| r.metrics.mean_abs_z3).fold(0.0, f64::max);
        let max_mean_e = s.runs.iter().map(|r| r.metrics.mean_position_error).fold(0.0, f64::max);
        let ok = s.failures == 0 && s.max_abs_z3 < 0.5 && max_mean_z < 0.25 && max_mean_e < 0.3;
        Ok((
            ok,
            format!(
                "20 seeds, {} failed: max |z3| {:.3} m, worst mean |z3| {:.3} m, worst mean |e| {:.3} m",
                s.failures, s.max_abs_z3, max_mean_z, max_mean_e
            ),
        ))
    })
}

/// Compare two directories file by file (CSV files only).
pub fn same_csv_files(a: &std::path::Path, b: &std::path::Path) -> anyhow::Result<(usize, Vec<String>)> {
    let mut names: Vec<_> = std::fs::read_dir(a)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        if std::fs::read(a.join(n))? != std::fs::read(b.join(n)).unwrap_or_default() {
            differing.push(n.clone());
        }
    }
    Ok((names.len(), differing))
}
