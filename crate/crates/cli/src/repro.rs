//! Canned scenarios behind `g2t repro`. Each writes CSV traces and `report.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use nalgebra::{Matrix4, Vector4};
use serde::Serialize;
use serde_json::{json, Value};

use g2t_core::lattice_planner::{load_or_build, FootprintConfig, Hlut, OccupancyGrid, Planner, DEFAULT_CUTOFF};
use g2t_core::path_following::{
    alternating_straight_lyapunov, straight_nominal, transition_matrix, verify_switched, HybridGains, LqWeights,
    NominalPath, SwitchVerdict,
};
use g2t_core::primitive_gen::{load_or_generate, Library, OcpSettings};
use g2t_core::simulator::{
    bench, default_plan_settings, run, run_on_path, write_trace, BatchSummary, Estimator, FigureEightConfig,
    MeasurementMode, PlanSource, RunMetrics, RunOutput, Scenario,
};
use g2t_core::{AugmentedState, Direction, VehicleParams, VehicleState};

pub const SCENARIOS: [&str; 4] = ["figure-eight", "two-point-turn", "t-turn", "fig9"];

/// Tracking thresholds shared by the noisy scenarios.
pub const MAX_ABS_Z3: f64 = 0.5;
pub const MEAN_ABS_Z3: f64 = 0.25;
pub const MEAN_POSITION_ERROR: f64 = 0.3;
pub const SETTLE_FRACTION: f64 = 0.8;
/// Backward speed of the noisy runs.
pub const NOISY_BACKWARD_SPEED: f64 = -0.8;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub metrics: Value,
    pub thresholds: Value,
    pub pass: bool,
}

/// Shared inputs: vehicle, cache of library and heuristic table, worker count.
#[derive(Clone, Debug)]
pub struct Context {
    pub params: VehicleParams,
    pub cache_dir: PathBuf,
    pub jobs: usize,
}

impl Context {
    pub fn library_path(&self) -> PathBuf {
        self.cache_dir.join("g2t-default-library.json")
    }

    pub fn hlut_path(&self) -> PathBuf {
        self.cache_dir.join("g2t-default-hlut.bin")
    }

    pub fn library(&self) -> anyhow::Result<Library> {
        std::fs::create_dir_all(&self.cache_dir)?;
        Ok(load_or_generate(&self.library_path(), &self.params, &OcpSettings::default(), 1.2, self.jobs)?)
    }

    pub fn hlut(&self, lib: &Library) -> anyhow::Result<Hlut> {
        Ok(load_or_build(&self.hlut_path(), lib, DEFAULT_CUTOFF)?)
    }
}

pub fn run_named(name: &str, ctx: &Context, out: &Path) -> anyhow::Result<Report> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = match name {
        "figure-eight" => figure_eight(ctx, out)?,
        "two-point-turn" => planned_turn(ctx, out, &two_point_turn_problem())?,
        "t-turn" => planned_turn(ctx, out, &t_turn_problem())?,
        "fig9" => alternating_straights(ctx, out)?,
        other => anyhow::bail!("unknown scenario {other:?}; expected one of {SCENARIOS:?}"),
    };
    let f = File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(f, &report)?;
    Ok(report)
}

fn save_trace(out: &Path, name: &str, o: &RunOutput) -> anyhow::Result<()> {
    write_trace(&o.trace, File::create(out.join(name))?)?;
    Ok(())
}

fn figure_eight_source(d: Direction) -> PlanSource {
    PlanSource::FigureEight { direction: d, config: FigureEightConfig::default() }
}

pub struct NamedRun {
    pub name: &'static str,
    pub output: RunOutput,
}

/// Noise-free runs from large initial errors, the filter in the loop.
pub fn convergence_runs() -> anyhow::Result<Vec<NamedRun>> {
    let cases = [
        ("backward", Direction::Backward, [1.0, 0.0, 0.1, 0.1]),
        ("forward", Direction::Forward, [-3.0, 0.0, -std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_6]),
    ];
    cases
        .into_iter()
        .map(|(name, d, e)| {
            let sc = Scenario { name: format!("converge-{name}"), plan: figure_eight_source(d), initial_error: e, ..Default::default() };
            Ok(NamedRun { name, output: run(&sc)? })
        })
        .collect()
}

pub fn noisy_scenario() -> Scenario {
    let mut sc = Scenario { name: "figure-eight-noisy".into(), plan: figure_eight_source(Direction::Backward), ..Default::default() };
    sc.disturbance.mode = MeasurementMode::Gaussian;
    sc.speeds.backward = NOISY_BACKWARD_SPEED;
    sc
}

pub fn noisy_figure_eight(runs: usize, seed: u64, jobs: usize) -> anyhow::Result<BatchSummary> {
    Ok(bench(&[noisy_scenario()], runs, seed, jobs)?)
}

fn tracking_ok(m: &RunMetrics) -> bool {
    m.max_abs_z3 < MAX_ABS_Z3 && m.mean_abs_z3 < MEAN_ABS_Z3 && m.mean_position_error < MEAN_POSITION_ERROR
}

fn tracking_thresholds() -> Value {
    json!({
        "max_abs_z3": MAX_ABS_Z3,
        "mean_abs_z3": MEAN_ABS_Z3,
        "mean_position_error": MEAN_POSITION_ERROR,
        "failures": 0,
    })
}

fn figure_eight(ctx: &Context, out: &Path) -> anyhow::Result<Report> {
    let conv = convergence_runs()?;
    let mut conv_pass = true;
    let mut conv_metrics = serde_json::Map::new();
    for r in &conv {
        save_trace(out, &format!("converge_{}.csv", r.name), &r.output)?;
        let m = &r.output.metrics;
        conv_pass &= r.output.failure.is_none() && m.settle_fraction.is_some_and(|f| f < SETTLE_FRACTION) && m.s_tilde_increasing;
        conv_metrics.insert(r.name.into(), json!({ "metrics": m, "failure": r.output.failure }));
    }
    let noisy = run(&Scenario { seed: 0, ..noisy_scenario() })?;
    save_trace(out, "noisy_seed0.csv", &noisy)?;
    let batch = noisy_figure_eight(20, 0, ctx.jobs)?;
    let batch_pass = batch.failures == 0 && batch.runs.iter().all(|r| tracking_ok(&r.metrics));
    Ok(Report {
        scenario: "figure-eight".into(),
        metrics: json!({
            "convergence": conv_metrics,
            "noisy": {
                "runs": batch.runs.len(),
                "failures": batch.failures,
                "max_abs_z3": batch.max_abs_z3,
                "worst_mean_abs_z3": batch.runs.iter().map(|r| r.metrics.mean_abs_z3).fold(0.0, f64::max),
                "worst_mean_position_error": batch.runs.iter().map(|r| r.metrics.mean_position_error).fold(0.0, f64::max),
                "max_position_error": batch.max_position_error,
            },
        }),
        thresholds: json!({ "convergence": { "settle_fraction": SETTLE_FRACTION, "tolerance": 0.02 }, "noisy": tracking_thresholds() }),
        pass: conv_pass && batch_pass,
    })
}

/// A planning problem on a rectangular grid built from free-space predicates.
pub struct TurnProblem {
    pub name: &'static str,
    /// `(x3, y3, theta3, alpha)`.
    pub start: [f64; 4],
    pub goal: [f64; 4],
    pub origin: [f64; 2],
    pub size: (usize, usize),
    pub free: fn(f64, f64) -> bool,
}

impl TurnProblem {
    pub fn grid(&self) -> anyhow::Result<OccupancyGrid> {
        let res = 0.5;
        let mut g = OccupancyGrid::new(res, self.size.0, self.size.1, self.origin)?;
        for i in 0..self.size.0 {
            for j in 0..self.size.1 {
                let x = self.origin[0] + res * (i as f64 + 0.5);
                let y = self.origin[1] + res * (j as f64 + 0.5);
                g.set_occupied(i, j, !(self.free)(x, y));
            }
        }
        Ok(g)
    }
}

/// A 30 m wide road with a pocket on its left, behind the start. The semitrailer
/// must face the other way at the goal, 40 m back along the road.
pub fn two_point_turn_problem() -> TurnProblem {
    TurnProblem {
        name: "two-point-turn",
        start: [0.0, 0.0, 0.0, 0.0],
        goal: [-40.0, 0.0, std::f64::consts::PI, 0.0],
        origin: [-80.0, -40.0],
        size: (240, 160),
        free: |x, y| y.abs() < 15.0 || (x > -35.0 && x < -5.0 && y > 0.0),
    }
}

/// Open area; reverse the heading with a small displacement.
pub fn t_turn_problem() -> TurnProblem {
    TurnProblem {
        name: "t-turn",
        start: [0.0, 0.0, 0.0, 0.0],
        goal: [-14.0, 12.0, std::f64::consts::PI, 0.0],
        origin: [-60.0, -60.0],
        size: (240, 240),
        free: |_, _| true,
    }
}

pub fn plan_turn(ctx: &Context, prob: &TurnProblem) -> anyhow::Result<(NominalPath, Value)> {
    let lib = ctx.library()?;
    let hlut = ctx.hlut(&lib)?;
    let grid = prob.grid()?;
    let mut planner = Planner::new(&lib, Some(&hlut), &grid, &ctx.params, &FootprintConfig::default());
    let at = |q: &[f64; 4]| AugmentedState::new(VehicleState::new(q[0], q[1], q[2], 0.0, 0.0), q[3], 0.0);
    let out = planner.plan(&at(&prob.start), &at(&prob.goal), &default_plan_settings())?;
    let best = out.best();
    let info = json!({
        "cost": best.cost,
        "gamma": best.gamma,
        "expansions": best.expansions,
        "primitives": best.primitive_ids(),
        "direction_segments": best.path.segments().len(),
        "length": best.path.s_end(),
    });
    Ok((best.path.clone(), info))
}

fn planned_turn(ctx: &Context, out: &Path, prob: &TurnProblem) -> anyhow::Result<Report> {
    let (path, plan) = plan_turn(ctx, prob)?;
    path.write_csv(File::create(out.join("plan.csv"))?)?;
    std::fs::write(out.join("grid.json"), prob.grid()?.to_json()?)?;
    let mut sc = Scenario {
        name: prob.name.into(),
        plan: PlanSource::File { path: "plan.csv".into() },
        estimator: Estimator::Ekf,
        ..Default::default()
    };
    sc.disturbance.mode = MeasurementMode::Gaussian;
    sc.speeds.backward = NOISY_BACKWARD_SPEED;
    std::fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&sc)?)?;
    let o = run_on_path(&sc, &path, &ctx.params)?;
    save_trace(out, "trace.csv", &o)?;
    let pass = o.failure.is_none() && o.metrics.progress >= 1.0 && tracking_ok(&o.metrics);
    Ok(Report {
        scenario: prob.name.into(),
        metrics: json!({ "plan": plan, "tracking": o.metrics, "failure": o.failure }),
        thresholds: tracking_thresholds(),
        pass,
    })
}

pub struct AlternatingStraights {
    pub s: Matrix4<f64>,
    pub eta: f64,
    /// `V_d` at each switch, keyed by segment length in metres.
    pub sequences: BTreeMap<u32, Vec<f64>>,
}

/// `V_d` over 30 switches of 1, 10 and 18 m straights, with `S` certified on the 18 m pair.
pub fn alternating_sequences(p: &VehicleParams) -> anyhow::Result<AlternatingStraights> {
    let g = HybridGains::design(p, &LqWeights::default())?;
    let fs: Vec<Matrix4<f64>> = [Direction::Forward, Direction::Backward]
        .iter()
        .map(|&d| transition_matrix(&straight_nominal(18.0, d, 0.1, p)?, &g, p, 0.01))
        .collect::<Result<_, _>>()?;
    let cert = match verify_switched(&fs, 0.3)? {
        SwitchVerdict::Certified(c) => c,
        v => anyhow::bail!("no switching certificate for the 18 m pair: {v:?}"),
    };
    let x0 = Vector4::new(1.0, 0.1, -0.1, 0.1);
    let mut sequences = BTreeMap::new();
    for len in [1u32, 10, 18] {
        sequences.insert(len, alternating_straight_lyapunov(len as f64, 30, x0, &cert.s, &g, p)?);
    }
    Ok(AlternatingStraights { s: cert.s, eta: cert.eta, sequences })
}

fn alternating_straights(ctx: &Context, out: &Path) -> anyhow::Result<Report> {
    let r = alternating_sequences(&ctx.params)?;
    let mut w = csv::Writer::from_writer(File::create(out.join("vd.csv"))?);
    w.write_record(["k", "d1", "d10", "d18"])?;
    let n = r.sequences.values().map(Vec::len).min().unwrap_or(0);
    for k in 0..n {
        let mut row = vec![k.to_string()];
        row.extend(r.sequences.values().map(|v| v[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut per_d = serde_json::Map::new();
    for (len, v) in &r.sequences {
        let max = v.iter().cloned().fold(0.0, f64::max);
        per_d.insert(
            format!("{len}m"),
            json!({
                "v_d": v,
                "strictly_decreasing": v.windows(2).all(|w| w[1] < w[0]),
                "max_over_initial": max / v[0],
            }),
        );
    }
    let v18 = &r.sequences[&18];
    let v1 = &r.sequences[&1];
    let pass = v18.windows(2).all(|w| w[1] < w[0])
        && v1.iter().cloned().fold(0.0, f64::max) < 3.0 * v1[0]
        && !v1.windows(2).all(|w| w[1] < w[0]);
    Ok(Report {
        scenario: "fig9".into(),
        metrics: json!({ "eta": r.eta, "s": r.s.as_slice(), "sequences": per_d }),
        thresholds: json!({ "18m": "strictly decreasing", "1m": { "max_over_initial": 3.0, "strictly_decreasing": false } }),
        pass,
    })
}
