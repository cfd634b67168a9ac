use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclic-inference"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("CYCLIC_INFERENCE_OUT")
        .output()
        .expect("run binary")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn energetics_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["energetics"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    let summary = &r["suites"][0]["summary"];
    let ratio = summary["ratio"].as_f64().unwrap();
    assert!((ratio - 4.0).abs() < 0.05);
    assert_eq!(summary["tinsley_probability"], 0.516);
    assert!(r["rng"].as_str().unwrap().starts_with("chacha20"));
}

#[test]
fn cycle_born_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cycle-born", "--n", "5", "--q", "3", "--instances", "100", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["seed"], 7);
    let check = &r["suites"][0]["checks"][0];
    assert_eq!(check["name"], "cycle_born_marginals");
    assert!(check["value"].as_f64().unwrap() <= 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("cycle_probability_matrices.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("site,row,col,value"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    let value = first[3];
    assert!(value.contains('e'));
    let mantissa = value.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn tolerance_override_can_fail_a_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["energetics", "--tol.energetics_ratio=1e-6"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["passed"], false);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL energetics_ratio"));
}

#[test]
fn malformed_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    std::fs::write(&input, r#"{"instances": 3, "bogus": 1}"#).unwrap();
    let out = run(&["bp-chain", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&input, "not json").unwrap();
    let out = run(&["bp-chain", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["vn-equiv", "--dt", "-1"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["no-such-suite"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["energetics", "--tol.ratio"], dir.path()).status.code(), Some(2));
}

#[test]
fn input_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.json");
    std::fs::write(&input, r#"{"instances": 3, "dim": 3, "t": 0.5}"#).unwrap();
    let out = run(&["vn-equiv", "--input", input.to_str().unwrap(), "--instances", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["suites"][0]["summary"]["instances"], 2);
    assert_eq!(r["suites"][0]["summary"]["t"], 0.5);
}

#[test]
fn environment_overrides_out() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_cyclic-inference"))
        .args(["energetics", "--out"])
        .arg(dir.path().join("flag"))
        .env("CYCLIC_INFERENCE_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env_dir.join("report.json").exists());
    assert!(!dir.path().join("flag").exists());
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["bp-chain", "--instances", "20", "--seed", "3", "--jobs", "2"], &a);
    run(&["bp-chain", "--instances", "20", "--seed", "3", "--jobs", "1"], &b);
    for f in ["report.json", "bp_messages.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
