use std::process::{Command, Output};

use serde_json::Value;

fn qszego(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qszego")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn children_of_a_tile() {
    let out = qszego(&["tile", "children", "--j", "1", "--gamma", "0", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["count"], 1024);
    assert_eq!(v["children"].as_array().unwrap().len(), 1024);
    assert!(v["children"].as_array().unwrap().iter().all(|c| c["j"] == 0));
}

#[test]
fn kernel_value_at_a_quaternion() {
    let v = stdout_json(&qszego(&["kernel-eval", "1,0,0,0", "--c", "2"]));
    assert!((v["value"][0].as_f64().unwrap() - 24.0).abs() < 1e-12);
    let v = stdout_json(&qszego(&["kernel-eval", "--s", "1", "--g", "0", "--gp", "0"]));
    assert!((v["modulus"].as_f64().unwrap() - 12.0).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qszego(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qszego(&["decay", "--n", "1"]).status.code(), Some(2));
    assert_eq!(qszego(&["tile", "children", "--j", "0", "--gamma", "1,2"]).status.code(), Some(2));
    assert_eq!(qszego(&["commutator", "--symbol", "nonsense"]).status.code(), Some(2));
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = qszego(&["min-sphere", "--samples", "2000", "--seed", "5", "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    let v: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["status"], "pass");
    assert_eq!(v["seed"], 5);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["batteries"][0]["details"]["radius-1"]["value"].as_f64().unwrap() > 0.0);
    assert!(a.path().join("timings.json").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# quick run\nseed = 11\nsamples = 50\nc = 3\n").unwrap();
    let out = qszego(&["invariance", "--config", cfg.to_str().unwrap(), "--seed", "12", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["config"]["seed"], 12);
    assert_eq!(v["config"]["samples"], 50);
    assert_eq!(v["config"]["c"], 3.0);
    std::fs::write(&cfg, "mystery = 1\n").unwrap();
    assert_eq!(qszego(&["invariance", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn atom_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = qszego(&["atom", "make", "--radius", "0.5", "--p", "0.9", "--nodes", "4000", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let spec = stdout_json(&out);
    assert_eq!(spec["alpha"], 1);
    let path = dir.path().join("atom.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let chk = qszego(&["atom", "check", path.to_str().unwrap(), "--samples", "2000"]);
    assert_eq!(chk.status.code(), Some(0), "{}", String::from_utf8_lossy(&chk.stdout));
    assert_eq!(stdout_json(&chk)["check"]["pass"], true);
    let pr = stdout_json(&qszego(&["atom", "project", path.to_str().unwrap(), "--s", "1"]));
    assert!(pr["error"].as_f64().unwrap().is_finite());

    // A constant bump has a non-zero mean: the check fails with exit 1.
    let out = qszego(&["atom", "make", "--template", "constant", "--nodes", "2000"]);
    std::fs::write(&path, &out.stdout).unwrap();
    assert_eq!(qszego(&["atom", "check", path.to_str().unwrap(), "--samples", "500"]).status.code(), Some(1));
}

#[test]
fn constant_symbol_commutator_vanishes() {
    let out = qszego(&["commutator", "--symbol", "const", "--samples", "40", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["batteries"][0]["checks"][1]["name"], "max-singular-value-over-scale");
    assert_eq!(v["batteries"][0]["checks"][1]["value"], 0.0);
}
