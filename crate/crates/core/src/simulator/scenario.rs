//! Scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::figure_eight::{make_figure_eight, FigureEightConfig};
use crate::error::{Error, Result};
use crate::lattice_planner::{load_or_build, FootprintConfig, OccupancyGrid, PlanSettings, Planner, DEFAULT_CUTOFF};
use crate::observer::{LidarConfig, NoiseConfig, RansacConfig};
use crate::path_following::{LqWeights, NominalPath};
use crate::primitive_gen::{load_or_generate, OcpSettings};
use crate::vehicle_model::{AugmentedState, Direction, VehicleParams, VehicleState};

/// Where the nominal path comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    FigureEight {
        direction: Direction,
        #[serde(default)]
        config: FigureEightConfig,
    },
    /// Nominal path CSV as written by `g2t plan`.
    File { path: PathBuf },
    /// Plan on the lattice between two states `(x3, y3, theta3, alpha)`.
    Lattice {
        start: [f64; 4],
        goal: [f64; 4],
        /// Primitive library file; generated there if missing.
        library: PathBuf,
        /// Heuristic table file; built there if missing.
        #[serde(default)]
        hlut: Option<PathBuf>,
        #[serde(default)]
        grid: Option<PathBuf>,
        /// Library reduction factor.
        #[serde(default = "default_eta")]
        eta: f64,
        /// Search settings. The default has no wall-clock limit so that runs are reproducible.
        #[serde(default = "default_plan_settings")]
        settings: PlanSettings,
    },
}

fn default_eta() -> f64 {
    1.2
}

pub fn default_plan_settings() -> PlanSettings {
    PlanSettings { max_time_ms: None, max_expansions: Some(5_000_000), ..Default::default() }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Measurements equal the true outputs.
    #[default]
    Exact,
    /// Gaussian noise on both measurement vectors.
    Gaussian,
    /// Gaussian localisation noise; the joint measurement comes from a simulated
    /// point cloud through RANSAC.
    Lidar,
}

/// State the controller sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Ekf,
    /// The true state, bypassing sensors and filter.
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Disturbance {
    pub mode: MeasurementMode,
    /// True localisation noise variances on (x1, y1, theta1).
    pub loc_var: [f64; 3],
    /// True joint measurement noise variances on (Ly, phi).
    pub ran_var: [f64; 2],
    /// Radial lidar noise standard deviation [m].
    pub lidar_sigma: f64,
    /// Fraction of outlier returns in each scan.
    pub outliers: f64,
    /// Constant curvature added to every applied command [1/m].
    pub curvature_bias: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self { mode: MeasurementMode::Exact, loc_var: n.loc_diag, ran_var: n.ran_diag, lidar_sigma: 0.01, outliers: 0.0, curvature_bias: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speeds {
    pub forward: f64,
    pub backward: f64,
}

impl Default for Speeds {
    fn default() -> Self {
        Self { forward: 1.0, backward: -1.0 }
    }
}

impl Speeds {
    pub fn for_direction(&self, d: Direction) -> f64 {
        match d {
            Direction::Forward => self.forward,
            Direction::Backward => self.backward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    /// Vehicle config file; built-in defaults when absent.
    pub vehicle: Option<PathBuf>,
    pub plan: PlanSource,
    /// Initial error (z3, theta3, beta3, beta2) relative to the path start.
    pub initial_error: [f64; 4],
    /// Explicit initial true state; overrides `initial_error` when given.
    pub initial_state: Option<[f64; 5]>,
    pub estimator: Estimator,
    /// Time the filter runs on a standing vehicle before the path starts [s].
    pub warmup: f64,
    /// Estimator tuning and rates.
    pub filter: NoiseConfig,
    pub disturbance: Disturbance,
    pub weights: LqWeights,
    pub lidar: LidarConfig,
    pub ransac: RansacConfig,
    pub speeds: Speeds,
    /// Plant integration rate [Hz].
    pub plant_hz: f64,
    /// Simulated time limit [s].
    pub duration_cap: f64,
    pub seed: u64,
    /// Tolerance used for the reach and settle metrics.
    pub settle_tol: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            vehicle: None,
            plan: PlanSource::FigureEight { direction: Direction::Backward, config: FigureEightConfig::default() },
            initial_error: [0.0; 4],
            initial_state: None,
            estimator: Estimator::Ekf,
            warmup: 2.0,
            filter: NoiseConfig::default(),
            disturbance: Disturbance::default(),
            weights: LqWeights::default(),
            lidar: LidarConfig::default(),
            ransac: RansacConfig::default(),
            speeds: Speeds::default(),
            plant_hz: 1000.0,
            duration_cap: 1200.0,
            seed: 0,
            settle_tol: 0.02,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Load a scenario; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(v) = s.vehicle.as_mut() {
            fix(v);
        }
        match &mut s.plan {
            PlanSource::File { path } => fix(path),
            PlanSource::Lattice { library, hlut, grid, .. } => {
                fix(library);
                if let Some(h) = hlut.as_mut() {
                    fix(h);
                }
                if let Some(g) = grid.as_mut() {
                    fix(g);
                }
            }
            PlanSource::FigureEight { .. } => {}
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speeds.forward > 0.0) || !(self.speeds.backward < 0.0) {
            return Err(Error::Config("forward speed must be positive and backward speed negative".into()));
        }
        if !(self.warmup >= 0.0) {
            return Err(Error::Config("warm-up time must be non-negative".into()));
        }
        if !(self.duration_cap > 0.0) {
            return Err(Error::Config("duration cap must be positive".into()));
        }
        let f = &self.filter;
        for (name, hz) in [("ekf", f.ekf_hz), ("loc", f.loc_hz), ("ran", f.ran_hz), ("ctrl", f.ctrl_hz)] {
            let ratio = self.plant_hz / hz;
            if !(hz > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
                return Err(Error::Config(format!("{name} rate {hz} Hz does not divide the plant rate {} Hz", self.plant_hz)));
            }
        }
        for (name, hz) in [("loc", f.loc_hz), ("ran", f.ran_hz)] {
            let ratio = f.ekf_hz / hz;
            if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
                return Err(Error::Config(format!("{name} rate {hz} Hz must divide the filter rate")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<VehicleParams> {
        match &self.vehicle {
            Some(p) => VehicleParams::load(p),
            None => Ok(VehicleParams::default()),
        }
    }

    /// Nominal path of the scenario.
    pub fn nominal_path(&self, p: &VehicleParams) -> Result<NominalPath> {
        match &self.plan {
            PlanSource::FigureEight { direction, config } => make_figure_eight(p, config, *direction),
            PlanSource::File { path } => NominalPath::read_csv(std::fs::File::open(path)?),
            PlanSource::Lattice { start, goal, library, hlut, grid, eta, settings } => {
                let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
                let lib = load_or_generate(library, p, &OcpSettings::default(), *eta, jobs)?;
                let table = match hlut {
                    Some(h) => Some(load_or_build(h, &lib, DEFAULT_CUTOFF)?),
                    None => None,
                };
                let grid = match grid {
                    Some(g) => OccupancyGrid::load(g)?,
                    None => open_grid(start, goal)?,
                };
                let mut planner = Planner::new(&lib, table.as_ref(), &grid, p, &FootprintConfig::default());
                let at = |q: &[f64; 4]| AugmentedState::new(VehicleState::new(q[0], q[1], q[2], 0.0, 0.0), q[3], 0.0);
                let out = planner.plan(&at(start), &at(goal), settings)?;
                let best = out.best();
                Ok(best.path.clone())
            }
        }
    }

    /// Initial true state: the path start displaced by the initial error.
    pub fn initial_true_state(&self, path: &NominalPath) -> Result<VehicleState> {
        if let Some(x) = self.initial_state {
            return Ok(VehicleState::new(x[0], x[1], x[2], x[3], x[4]));
        }
        let r = path.samples.first().ok_or_else(|| Error::InvalidParameter("empty nominal path".into()))?.state.state;
        let e = self.initial_error;
        let (s, c) = r.theta3.sin_cos();
        Ok(VehicleState::new(r.x3 - e[0] * s, r.y3 + e[0] * c, r.theta3 + e[1], r.beta3 + e[2], r.beta2 + e[3]))
    }
}

/// Obstacle-free grid spanning both states with a 40 m margin.
fn open_grid(a: &[f64; 4], b: &[f64; 4]) -> Result<OccupancyGrid> {
    let res = 0.5;
    let x0 = (a[0].min(b[0]) - 40.0).floor();
    let y0 = (a[1].min(b[1]) - 40.0).floor();
    let w = ((a[0].max(b[0]) + 40.0 - x0) / res).ceil() as usize;
    let h = ((a[1].max(b[1]) + 40.0 - y0) / res).ceil() as usize;
    OccupancyGrid::new(res, w, h, [x0, y0])
}
