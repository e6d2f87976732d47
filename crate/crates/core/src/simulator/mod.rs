//! Closed-loop scenarios: true plant, estimator and controller at their own rates.

pub mod figure_eight;
pub mod metrics;
pub mod run;
pub mod scenario;

pub use figure_eight::{figure_eight_lap, make_figure_eight, FigureEightConfig};
pub use metrics::{compute_metrics, event, read_trace, write_trace, RunMetrics, TraceRow};
pub use run::{run, run_on_path, Failure, FailureKind, RunOutput, RUNAWAY_DISTANCE};
pub use scenario::{default_plan_settings, Disturbance, Estimator, MeasurementMode, PlanSource, Scenario, Speeds};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_following::NominalPath;
use crate::vehicle_model::VehicleParams;

/// Outcome of one run in a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub scenario: String,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub failure: Option<Failure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: Vec<BatchRun>,
    pub failures: usize,
    /// Largest per-run maximum of the estimated lateral error.
    pub max_abs_z3: f64,
    /// Average of the per-run means.
    pub mean_abs_z3: f64,
    pub max_position_error: f64,
    pub mean_position_error: f64,
}

impl BatchSummary {
    fn from_runs(runs: Vec<BatchRun>) -> Self {
        let n = runs.len().max(1) as f64;
        let fold = |f: fn(&RunMetrics) -> f64| runs.iter().map(|r| f(&r.metrics)).fold(0.0, f64::max);
        let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        Self {
            failures: runs.iter().filter(|r| r.failure.is_some()).count(),
            max_abs_z3: fold(|m| m.max_abs_z3),
            mean_abs_z3: mean(|m| m.mean_abs_z3),
            max_position_error: fold(|m| m.max_position_error),
            mean_position_error: mean(|m| m.mean_position_error),
            runs,
        }
    }
}

/// Run every scenario `runs` times with seeds `seed, seed + 1, ...` on `jobs` threads.
/// Each scenario's path is built once. Results are ordered by scenario, then seed.
pub fn bench(scenarios: &[Scenario], runs: usize, seed: u64, jobs: usize) -> Result<BatchSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let prepared: Vec<(VehicleParams, NominalPath)> = scenarios
            .par_iter()
            .map(|sc| {
                let p = sc.params()?;
                let path = sc.nominal_path(&p)?;
                Ok((p, path))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, u64)> = (0..scenarios.len()).flat_map(|i| (0..runs as u64).map(move |k| (i, seed + k))).collect();
        let out = jobs
            .par_iter()
            .map(|&(i, s)| {
                let sc = Scenario { seed: s, ..scenarios[i].clone() };
                let (p, path) = &prepared[i];
                let o = run_on_path(&sc, path, p)?;
                Ok(BatchRun { scenario: sc.name.clone(), seed: s, metrics: o.metrics, failure: o.failure })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchSummary::from_runs(out))
    })
}
