//! End-to-end tests of the binary: exit codes, report shape, determinism,
//! and the command line override contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, log: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conley-front"))
        .args(args)
        .current_dir(dir)
        .env("CONLEY_FRONT_LOG", log)
        .output()
        .unwrap()
}

fn run(dir: &Path, args: &[&str]) -> Output {
    run_in(dir, "quiet", args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn report(dir: &Path, out: &str) -> Value {
    let text = fs::read_to_string(dir.join(out).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const CRITICAL_POINTS: &str = r#"{
  "system": {"builtin": "double_well", "params": {"eps": 0.5}},
  "search": {"box": [[-1.5, 1.5]]}
}"#;

const SOLVE_FRONT: &str = r#"{
  "system": {"builtin": "double_well", "params": {"eps": 0.5}},
  "grid": {"L": 25.0, "n": 401},
  "front": {"z_minus": [0.0], "z_plus": [0.7]}
}"#;

#[test]
fn identical_runs_produce_identical_reports() {
    let dir = workdir("determinism");
    let cfg = write_config(&dir, "run.json", CRITICAL_POINTS);
    let a = run(&dir, &["--config", &cfg, "--out", "a", "critical-points"]);
    let b = run(&dir, &["--config", &cfg, "--out", "b", "critical-points"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    assert!(a.stderr.is_empty(), "quiet run wrote to stderr");
    let bytes_a = fs::read(dir.join("a/report.json")).unwrap();
    let bytes_b = fs::read(dir.join("b/report.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn overrides_land_in_the_config_echo_and_reproduce() {
    let dir = workdir("overrides");
    let cfg = write_config(&dir, "run.json", CRITICAL_POINTS);
    let out = run(
        &dir,
        &[
            "--config",
            &cfg,
            "--out",
            "a",
            "--beta",
            "0.5",
            "--workers",
            "2",
            "--seed-shift-range",
            "-2,2",
            "critical-points",
        ],
    );
    assert!(out.status.success());
    let rep = report(&dir, "a");
    assert_eq!(rep["config"]["system"]["params"]["beta"], 0.5);
    assert_eq!(rep["config"]["solver"]["workers"], 2);
    assert_eq!(rep["config"]["solver"]["shift_range"][0], -2);
    assert_eq!(rep["config"]["solver"]["shift_range"][1], 2);

    // The echo alone reproduces the run.
    let echoed = serde_json::to_string(&rep["config"]).unwrap();
    let cfg2 = write_config(&dir, "echo.json", &echoed);
    let out2 = run(&dir, &["--config", &cfg2, "--out", "b", "critical-points"]);
    assert!(out2.status.success());
    assert_eq!(rep["results"], report(&dir, "b")["results"]);
}

#[test]
fn even_grid_size_is_a_validation_error() {
    let dir = workdir("even-grid");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
          "system": {"builtin": "double_well"},
          "grid": {"L": 25.0, "n": 400},
          "front": {"z_minus": [0.0], "z_plus": [0.7]}
        }"#,
    );
    let out = run(&dir, &["--config", &cfg, "solve-front"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.n"), "stderr: {stderr}");
}

#[test]
fn unknown_builtin_is_a_validation_error() {
    let dir = workdir("unknown-builtin");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{"system": {"builtin": "pendulum"}, "search": {"box": [[-1.0, 1.0]]}}"#,
    );
    let out = run(&dir, &["--config", &cfg, "critical-points"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("system.builtin"), "stderr: {stderr}");
}

#[test]
fn starved_newton_exits_with_numerical_failure() {
    let dir = workdir("starved-newton");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
          "system": {"builtin": "double_well", "params": {"eps": 0.5}},
          "grid": {"L": 25.0, "n": 401},
          "solver": {"max_iterations": 1},
          "front": {"z_minus": [0.0], "z_plus": [0.7]}
        }"#,
    );
    let out = run(&dir, &["--config", &cfg, "solve-front"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no convergence"), "stderr: {stderr}");
}

#[test]
fn invalid_log_level_is_rejected() {
    let dir = workdir("bad-log");
    let cfg = write_config(&dir, "run.json", CRITICAL_POINTS);
    let out = run_in(&dir, "loud", &["--config", &cfg, "critical-points"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("CONLEY_FRONT_LOG"), "stderr: {stderr}");
}

#[test]
fn solve_front_writes_profile_and_residual() {
    let dir = workdir("solve-front");
    let cfg = write_config(&dir, "run.json", SOLVE_FRONT);
    let out = run(&dir, &["--config", &cfg, "--out", "a", "solve-front"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&dir, "a");
    assert!(rep["results"]["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(rep["results"]["index_gap"], 1);
    let csv = fs::read_to_string(dir.join("a/profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,u_1"));
    assert_eq!(lines.count(), 401);
}

#[test]
fn interval_block_report_has_exact_constant_and_ranks() {
    let dir = workdir("block");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
          "system": {"builtin": "double_well", "params": {"eps": 0.1}},
          "block": {"geometry": {"shape": "interval", "a": -2.0, "b": 2.0}}
        }"#,
    );
    let out = run(&dir, &["--config", &cfg, "--out", "a", "block-verify"]);
    assert!(out.status.success());
    let rep = report(&dir, "a");
    let c_perp = rep["results"]["block"]["c_perp"].as_f64().unwrap();
    assert!((c_perp - 6.0).abs() <= 6.0 * 1e-12);
    assert_eq!(rep["results"]["pass"], true);

    let out = run(&dir, &["--config", &cfg, "--out", "b", "rel-homology"]);
    assert!(out.status.success());
    let rep = report(&dir, "b");
    assert_eq!(rep["results"]["ranks"], serde_json::json!({"0": 1}));
}

#[test]
fn forcing_reports_bound_and_interpretation() {
    let dir = workdir("forcing");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
          "system": {"builtin": "double_well"},
          "forcing": {"num_constants": 3, "ranks": {"0": 1}}
        }"#,
    );
    let out = run(&dir, &["--config", &cfg, "--out", "a", "forcing"]);
    assert!(out.status.success());
    let rep = report(&dir, "a");
    assert_eq!(rep["results"]["bound"], 2);
    assert_eq!(
        rep["results"]["interpretation"],
        "at least 1 genuine heteroclinics or 2 generalised ones"
    );
}

#[test]
fn case_studies_run_on_a_coarse_grid() {
    let dir = workdir("case-studies");
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
          "system": {"builtin": "double_well", "params": {"eps": 0.1}},
          "grid": {"L": 25.0, "n": 401}
        }"#,
    );
    let out = run(&dir, &["--config", &cfg, "--out", "a", "case-studies"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&dir, "a");
    let results = &rep["results"];
    assert_eq!(results["double_well"]["cross_check"], true);
    assert_eq!(results["double_well"]["forcing_bound"], 2);
    for (i, ball) in results["saturating_balls"].as_array().unwrap().iter().enumerate() {
        let dim = i + 1;
        assert_eq!(ball["ranks"], serde_json::json!({dim.to_string(): 1}));
    }
    for (i, entry) in results["harmonic_family"].as_array().unwrap().iter().enumerate() {
        let k = i + 1;
        let expected = if k == 1 {
            serde_json::json!({})
        } else {
            serde_json::json!({"1": k - 1})
        };
        assert_eq!(entry["ranks"], expected, "harmonic {k}");
        assert_eq!(entry["forcing_bound"], 1);
    }
    assert_eq!(results["ball_scan"]["decreasing"], true);
}
