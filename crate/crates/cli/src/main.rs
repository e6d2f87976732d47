use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use g2t_cli::repro::{self, Context};
use g2t_core::lattice_planner::{build_hlut, FootprintConfig, Hlut, OccupancyGrid, PlanSettings, Planner, DEFAULT_CUTOFF};
use g2t_core::path_following::{transition_matrix, verify_mode, verify_switched, HybridGains, LqWeights, ModeVerdict, NominalPath, SwitchVerdict};
use g2t_core::primitive_gen::{generate_library, Library, OcpSettings};
use g2t_core::simulator::{bench, run, write_trace, MeasurementMode, Scenario};
use g2t_core::{AugmentedState, VehicleParams, VehicleState};

const EXIT_FAILED: u8 = 1;
const EXIT_NO_INPUT: u8 = 66;

#[derive(Parser)]
#[command(name = "g2t", version, about = "Lattice planning and path following for a car-like tractor with two trailers")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Vehicle parameter file; built-in defaults otherwise.
    #[arg(long, global = true)]
    vehicle: Option<PathBuf>,
    /// Where `repro` keeps the default library and heuristic table.
    #[arg(long, global = true, default_value = ".g2t-cache")]
    cache_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the motion-primitive library.
    Primgen {
        /// Vehicle parameter file (overrides --vehicle).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reduction factor: primitives replaceable by a chain within this cost ratio are dropped.
        #[arg(long, default_value_t = 1.2)]
        eta: f64,
    },
    /// Build the free-space heuristic table for a library.
    Hlut {
        #[arg(long)]
        lib: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: f64,
    },
    /// Plan between two states; writes the nominal path as CSV.
    Plan {
        /// Occupancy grid: PGM with a JSON sidecar, or a JSON grid.
        #[arg(long)]
        grid: PathBuf,
        /// Semitrailer axle pose and steering angle, "x,y,theta,alpha".
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        #[arg(long)]
        lib: PathBuf,
        #[arg(long)]
        hlut: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        gamma0: f64,
        #[arg(long, default_value_t = 60_000)]
        budget_ms: u64,
        /// Expansion cap; set it (with a large --budget-ms) for reproducible results.
        #[arg(long)]
        max_expansions: Option<usize>,
        #[arg(long, default_value = "plan.csv")]
        out: PathBuf,
    },
    /// Certify every primitive and search for a switching certificate.
    Verify {
        #[arg(long)]
        lib: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.3)]
        mu: f64,
        #[arg(long, default_value = "certs.json")]
        out: PathBuf,
    },
    /// Run one closed-loop scenario.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the measurement mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Overrides the simulated-time cap in seconds.
        #[arg(long)]
        duration_cap: Option<f64>,
    },
    /// Run every scenario in a directory over consecutive seeds.
    Bench {
        #[arg(long)]
        scenario_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Summary file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned scenario and write a pass/fail report.
    Repro {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(repro::SCENARIOS))]
        scenario: String,
        #[arg(long, default_value = "repro-out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Gaussian,
    Lidar,
}

impl From<Mode> for MeasurementMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => MeasurementMode::Exact,
            Mode::Gaussian => MeasurementMode::Gaussian,
            Mode::Lidar => MeasurementMode::Lidar,
        }
    }
}

/// Error for unusable inputs, reported with exit code 66.
#[derive(Debug)]
struct NoInput(String);

impl std::fmt::Display for NoInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NoInput {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<NoInput>() {
            return EXIT_NO_INPUT;
        }
        let io = match cause.downcast_ref::<g2t_core::Error>() {
            Some(g2t_core::Error::Io(io)) => Some(io),
            Some(g2t_core::Error::EmptyLibrary) => return EXIT_NO_INPUT,
            _ => cause.downcast_ref::<std::io::Error>(),
        };
        if io.is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound) {
            return EXIT_NO_INPUT;
        }
    }
    EXIT_FAILED
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn params(path: Option<&Path>) -> anyhow::Result<VehicleParams> {
    match path {
        Some(p) => VehicleParams::load(p).with_context(|| format!("reading vehicle parameters {}", p.display())),
        None => Ok(VehicleParams::default()),
    }
}

fn load_library(path: &Path) -> anyhow::Result<Library> {
    let lib = Library::load(path).with_context(|| format!("reading library {}", path.display()))?;
    if lib.primitives.is_empty() {
        return Err(NoInput(format!("library {} holds no primitives", path.display())).into());
    }
    Ok(lib)
}

fn parse_state(s: &str) -> anyhow::Result<AugmentedState> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>().with_context(|| format!("bad state {s:?}"))?;
    let [x, y, th, a] = v[..] else { bail!("state {s:?} needs four comma-separated numbers: x,y,theta,alpha") };
    Ok(AugmentedState::new(VehicleState::new(x, y, th, 0.0, 0.0), a, 0.0))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(File::create(path)?, v)?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    let vehicle = cli.vehicle.as_deref();
    match cli.command {
        Command::Primgen { config, out, eta } => {
            let p = params(config.as_deref().or(vehicle))?;
            let lib = generate_library(&p, &OcpSettings::default(), eta, jobs)?;
            lib.save(&out)?;
            println!("{} primitives written to {}", lib.len(), out.display());
            Ok(true)
        }
        Command::Hlut { lib, out, cutoff } => {
            let lib = load_library(&lib)?;
            let h = build_hlut(&lib, cutoff);
            h.save(&out)?;
            println!("{} table entries written to {}", h.len(), out.display());
            Ok(true)
        }
        Command::Plan { grid, start, goal, lib, hlut, gamma0, budget_ms, max_expansions, out } => {
            let p = params(vehicle)?;
            let grid = OccupancyGrid::load(&grid).with_context(|| format!("reading grid {}", grid.display()))?;
            let lib = load_library(&lib)?;
            let table = hlut.map(|h| Hlut::load(&h).with_context(|| format!("reading table {}", h.display()))).transpose()?;
            let settings = PlanSettings { gamma0, max_time_ms: Some(budget_ms), max_expansions, ..Default::default() };
            let mut planner = Planner::new(&lib, table.as_ref(), &grid, &p, &FootprintConfig::default());
            let plan = planner.plan(&parse_state(&start)?, &parse_state(&goal)?, &settings)?;
            let best = plan.best();
            best.path.write_csv(File::create(&out)?)?;
            let summary = json!({
                "plan": out,
                "cost": best.cost,
                "gamma": best.gamma,
                "expansions": best.expansions,
                "primitives": best.primitive_ids(),
                "budget_exhausted": plan.exhausted,
            });
            println!("{summary}");
            Ok(true)
        }
        Command::Verify { lib, epsilon, mu, out } => {
            let p = params(vehicle)?;
            let lib = load_library(&lib)?;
            let gains = HybridGains::design(&p, &LqWeights::default())?;
            let verdicts: Vec<(u32, NominalPath, ModeVerdict)> = lib
                .primitives
                .par_iter()
                .map(|m| {
                    let path = NominalPath::from_sampled(&m.path, &p, m.id as i64, 0.0, 0.0);
                    let v = verify_mode(&path, &gains, epsilon, &p)?;
                    Ok((m.id, path, v))
                })
                .collect::<g2t_core::Result<_>>()?;
            let mut certified = Vec::new();
            let mut failed = Vec::new();
            for (id, _, v) in &verdicts {
                match v {
                    ModeVerdict::Certified(c) => certified.push(json!({ "primitive_id": id, "p": c.p, "rho": c.rho, "epsilon": c.epsilon, "residual": c.residual })),
                    other => failed.push(json!({ "primitive_id": id, "verdict": format!("{other:?}") })),
                }
            }
            let fs: Vec<_> = verdicts
                .par_iter()
                .filter(|(_, _, v)| matches!(v, ModeVerdict::Certified(_)))
                .map(|(_, path, _)| transition_matrix(path, &gains, &p, 0.01))
                .collect::<g2t_core::Result<_>>()?;
            let switched = match verify_switched(&fs, mu)? {
                SwitchVerdict::Certified(c) => json!({ "status": "certified", "s": c.s, "eta": c.eta, "mu": c.mu, "lambda": c.lambda, "residual": c.residual }),
                SwitchVerdict::Refuted(r) => json!({ "status": "refuted", "evidence": format!("{r:?}") }),
                SwitchVerdict::Inconclusive { worst } => json!({ "status": "inconclusive", "worst": worst }),
            };
            let all = failed.is_empty();
            println!("{} of {} primitives certified; switching certificate {}", certified.len(), verdicts.len(), switched["status"]);
            write_json(&out, &json!({ "epsilon": epsilon, "modes": certified, "uncertified": failed, "switched": switched }))?;
            Ok(all)
        }
        Command::Sim { scenario, out_dir, seed, mode, duration_cap } => {
            let mut sc = Scenario::load(&scenario).with_context(|| format!("reading scenario {}", scenario.display()))?;
            if let Some(v) = vehicle {
                sc.vehicle = Some(v.to_path_buf());
            }
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(m) = mode {
                sc.disturbance.mode = m.into();
            }
            if let Some(c) = duration_cap {
                sc.duration_cap = c;
            }
            sc.validate()?;
            let o = run(&sc)?;
            std::fs::create_dir_all(&out_dir)?;
            write_trace(&o.trace, File::create(out_dir.join("trace.csv"))?)?;
            write_json(&out_dir.join("metrics.json"), &json!({ "scenario": sc.name, "seed": sc.seed, "metrics": o.metrics, "failure": o.failure }))?;
            match &o.failure {
                None => println!("{}: completed, max |z3| {:.3} m, mean {:.3} m", sc.name, o.metrics.max_abs_z3, o.metrics.mean_abs_z3),
                Some(f) => println!("{}: {:?} failure at t = {:.2} s: {}", sc.name, f.kind, f.t, f.message),
            }
            Ok(o.failure.is_none())
        }
        Command::Bench { scenario_dir, runs, seed, out } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&scenario_dir)
                .with_context(|| format!("reading {}", scenario_dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(NoInput(format!("no scenario files in {}", scenario_dir.display())).into());
            }
            let scenarios = files
                .iter()
                .map(|f| {
                    let mut sc = Scenario::load(f).with_context(|| format!("reading scenario {}", f.display()))?;
                    if let Some(v) = vehicle {
                        sc.vehicle = Some(v.to_path_buf());
                    }
                    Ok(sc)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let summary = bench(&scenarios, runs, seed, jobs)?;
            match out {
                Some(path) => write_json(&path, &summary)?,
                None => {
                    serde_json::to_writer_pretty(std::io::stdout().lock(), &summary)?;
                    println!();
                }
            }
            eprintln!("{} runs, {} failed, max |z3| {:.3} m", summary.runs.len(), summary.failures, summary.max_abs_z3);
            Ok(summary.failures == 0)
        }
        Command::Repro { scenario, out_dir } => {
            let ctx = Context { params: params(vehicle)?, cache_dir: cli.cache_dir, jobs };
            let report = repro::run_named(&scenario, &ctx, &out_dir)?;
            let mut so = std::io::stdout().lock();
            writeln!(so, "{}: {} (report in {})", scenario, if report.pass { "PASS" } else { "FAIL" }, out_dir.join("report.json").display())?;
            Ok(report.pass)
        }
    }
}
