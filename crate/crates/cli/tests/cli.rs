use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tomoprob(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomoprob")).current_dir(dir).args(args).output().expect("binary runs")
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fock1.json"), r#"{"kind": "fock", "n": 1}"#).unwrap();
    fs::write(dir.path().join("vacuum.json"), r#"{"kind": "fock", "n": 0}"#).unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"kind": "thermal", "nbar": -1}"#).unwrap();
    dir
}

#[test]
fn check_fock_one_succeeds() {
    let dir = workspace();
    let out = tomoprob(dir.path(), &["check", "--state", "fock1.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["satisfied"] == Value::Bool(true)));
    let heis = reports.iter().find(|r| r["name"] == "heisenberg").unwrap();
    assert!((heis["lhs"].as_f64().unwrap() - 2.25).abs() < 1e-6);
    assert!(dir.path().join("check.json").is_file());
}

#[test]
fn clipped_dataset_fails_ineq() {
    let dir = workspace();
    let sim = tomoprob(dir.path(), &["simulate", "--spec", "vacuum.json", "--seed", "3", "--clip", "-0.1,0.1"]);
    assert_eq!(sim.status.code(), Some(0), "{}", String::from_utf8_lossy(&sim.stderr));
    fs::rename(dir.path().join("dataset.csv"), dir.path().join("clipped.csv")).unwrap();
    fs::rename(dir.path().join("dataset.json"), dir.path().join("clipped.json")).unwrap();
    let out = tomoprob(dir.path(), &["ineq", "--tomogram", "clipped.csv", "--cuts", "-0.1,0,0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let heis: Value = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|r| r["name"] == "heisenberg")
        .unwrap();
    assert_eq!(heis["satisfied"], Value::Bool(false));
}

#[test]
fn unclipped_dataset_passes_ineq() {
    let dir = workspace();
    assert!(tomoprob(dir.path(), &["simulate", "--spec", "vacuum.json", "--seed", "3"]).status.success());
    let out = tomoprob(dir.path(), &["ineq", "--tomogram", "dataset.csv", "--cuts", "-1,0,0.5", "--theta", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn invalid_state_exits_two_with_json_error() {
    let dir = workspace();
    let out = tomoprob(dir.path(), &["state", "--spec", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "InvalidParameter");
    assert!(!dir.path().join("rho.csv").exists());
    assert!(!dir.path().join("state.json").exists());
}

#[test]
fn missing_input_and_bad_grid_exit_two() {
    let dir = workspace();
    let out = tomoprob(dir.path(), &["check", "--state", "nope.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tomoprob(dir.path(), &["wigner", "--spec", "vacuum.json", "--grid", "-5,5,-5,5,0,64"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("wigner.csv").exists());
    let out = tomoprob(dir.path(), &["evolve", "--spec", "vacuum.json", "--times", "0,0.01,0.02"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("frame_000.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    let runs: [&[&str]; 6] = [
        &["state", "--spec", "fock1.json"],
        &["wigner", "--spec", "fock1.json", "--grid", "-6,6,-6,6,97,97"],
        &["tomogram", "--spec", "fock1.json", "--angles", "16"],
        &["simulate", "--spec", "fock1.json", "--samples", "2000", "--seed", "9"],
        &["evolve", "--spec", "vacuum.json", "--harmonic", "1", "--times", "0.19,0.2,0.21"],
        &["roundtrip", "--spec", "fock1.json"],
    ];
    let files = [
        "rho.csv",
        "state.json",
        "wigner.csv",
        "wigner.json",
        "tomogram.csv",
        "dataset.csv",
        "dataset.json",
        "frame_000.csv",
        "frame_002.csv",
        "residual.json",
        "roundtrip.json",
    ];
    let snapshot = |dir: &Path| -> Vec<Vec<u8>> {
        for args in runs {
            let out = tomoprob(dir, args);
            assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
        files.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect()
    };
    let first = snapshot(dir.path());
    let second = snapshot(dir.path());
    assert_eq!(first, second);
}
