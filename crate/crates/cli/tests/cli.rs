use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use g2t_cli::repro::Context;
use g2t_core::lattice_planner::OccupancyGrid;
use g2t_core::path_following::NominalPath;
use g2t_core::VehicleParams;

fn g2t(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2t")).args(args).output().unwrap()
}

fn cached_library() -> PathBuf {
    let ctx = Context { params: VehicleParams::default(), cache_dir: PathBuf::from(env!("CARGO_TARGET_TMPDIR")), jobs: 4 };
    ctx.library().unwrap();
    ctx.library_path()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = g2t(&["plan", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(g2t(&["repro", "moon-landing"]).status.code(), Some(2));
}

#[test]
fn help_lists_every_subcommand() {
    let text = String::from_utf8(g2t(&["--help"]).stdout).unwrap();
    for cmd in ["primgen", "hlut", "plan", "verify", "sim", "bench", "repro"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_inputs_exit_66() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("absent.json");
    let out = dir.path().join("out");
    assert_eq!(g2t(&["verify", "--lib", s(&nowhere)]).status.code(), Some(66));
    assert_eq!(g2t(&["sim", "--scenario", s(&nowhere), "--out-dir", s(&out)]).status.code(), Some(66));
    assert_eq!(g2t(&["bench", "--scenario-dir", s(&out)]).status.code(), Some(66));
}

#[test]
fn verify_rejects_an_empty_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut lib: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cached_library()).unwrap()).unwrap();
    lib["primitives"] = serde_json::json!([]);
    let path = dir.path().join("empty.json");
    std::fs::write(&path, lib.to_string()).unwrap();
    let o = g2t(&["verify", "--lib", s(&path), "--out", s(&dir.path().join("c.json"))]);
    assert_eq!(o.status.code(), Some(66));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty primitive library"));
}

#[test]
fn plan_from_goal_to_itself_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, OccupancyGrid::new(0.5, 100, 100, [-25.0, -25.0]).unwrap().to_json().unwrap()).unwrap();
    let out = dir.path().join("plan.csv");
    let lib = cached_library();
    let o = g2t(&["plan", "--grid", s(&grid), "--lib", s(&lib), "--start", "0,0,0,0", "--goal", "0,0,0,0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = NominalPath::read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert!(path.is_empty());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["cost"], 0.0);
}

#[test]
fn sim_flags_override_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sc.json");
    std::fs::write(&sc, r#"{"name": "short", "plan": {"figure_eight": {"direction": "Backward"}}, "seed": 1, "duration_cap": 50.0}"#).unwrap();
    let out = dir.path().join("out");
    let o = g2t(&["sim", "--scenario", s(&sc), "--out-dir", s(&out), "--seed", "9", "--mode", "gaussian", "--duration-cap", "5"]);
    // The shortened cap makes the run time out.
    assert_eq!(o.status.code(), Some(1));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["failure"]["kind"], "timeout");
    assert!(out.join("trace.csv").exists());
}

#[test]
fn alternating_straights_report_has_the_three_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let o = g2t(&["repro", "fig9", "--out-dir", s(dir.path())]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["scenario", "metrics", "thresholds", "pass"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    for d in ["1m", "10m", "18m"] {
        assert_eq!(r["metrics"]["sequences"][d]["v_d"].as_array().unwrap().len(), 31);
    }
    assert_eq!(r["metrics"]["sequences"]["18m"]["strictly_decreasing"], true);
}
