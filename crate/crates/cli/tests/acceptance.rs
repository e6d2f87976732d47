//! Acceptance gate: runs every criterion and prints one line per result.

use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use g2t_cli::checks::{self, Verdict};
use g2t_cli::repro::{self, Context};
use g2t_core::VehicleParams;

fn determinism(ctx: &Context) -> Verdict {
    checks::timed(13, "Determinism", Duration::from_secs(600), || {
        let root = tempfile::tempdir()?;
        let mut notes = Vec::new();
        let mut ok = true;
        for name in repro::SCENARIOS {
            let dirs: Vec<PathBuf> = (0..2).map(|k| root.path().join(format!("{name}-{k}"))).collect();
            for d in &dirs {
                let status = Command::new(env!("CARGO_BIN_EXE_g2t"))
                    .arg("--cache-dir")
                    .arg(&ctx.cache_dir)
                    .args(["repro", name, "--out-dir"])
                    .arg(d)
                    .output()?;
                anyhow::ensure!(d.join("report.json").exists(), "{name}: no report ({})", String::from_utf8_lossy(&status.stderr));
            }
            let (n, differing) = checks::same_csv_files(&dirs[0], &dirs[1])?;
            ok &= n > 0 && differing.is_empty();
            notes.push(format!("{name}: {n} CSV files, {} differ", differing.len()));
        }
        Ok((ok, notes.join("; ")))
    })
}

fn main() {
    let p = VehicleParams::default();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ctx = Context { params: p.clone(), cache_dir: PathBuf::from(env!("CARGO_TARGET_TMPDIR")), jobs };
    // Loading or generating the cached library and table is not part of any criterion's runtime.
    let lib = ctx.library().expect("primitive library");
    let hlut = ctx.hlut(&lib).expect("heuristic table");

    let verdicts: Vec<Verdict> = vec![
        checks::lqr_gains(&p),
        checks::symmetry(&p),
        checks::equilibria(&p),
        checks::planner_optimality(&lib, &hlut, &p),
        checks::hlut_exactness(&lib, &hlut),
        checks::alternating_straights(&p),
        checks::mode_certificates(&lib, &p),
        checks::shared_certificate(&p),
        checks::convergence(),
        checks::observer_round_trip(&p),
        checks::ransac(&p),
        checks::noisy_tracking(jobs),
        determinism(&ctx),
    ]
    .into_iter()
    .inspect(|v| println!("{v}"))
    .collect();

    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
