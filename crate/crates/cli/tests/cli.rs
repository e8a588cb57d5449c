use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_see-opt"));
    cmd.env("SEE_OPT_LOG", "error");
    cmd
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk.json")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run(scenario: &Path, scheme: &str, out: &Path) -> Output {
    bin()
        .args(["run", "--scenario"])
        .arg(scenario)
        .args(["--scheme", scheme, "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&desk(), "msee_seq", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "solution.json", "summary.json", "summary_initial.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let summary = read_json(&dir.path().join("summary.json"));
    let initial = read_json(&dir.path().join("summary_initial.json"));
    assert_eq!(summary["audit_pass"], Value::Bool(true));
    assert_eq!(summary["converged"], Value::Bool(true));
    assert!(summary["msee"].as_f64().unwrap() > initial["msee"].as_f64().unwrap());

    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,block_committed,msee,masr,afpc,afpcr,wall_ms,objective"));
    assert!(trace.lines().count() >= 2);
}

#[test]
fn fixed_trajectory_scheme_keeps_the_initial_plan() {
    let dir = tempfile::tempdir().unwrap();
    let ftrj = dir.path().join("ftrj");
    let init = dir.path().join("initial");
    assert_eq!(run(&desk(), "ftrj", &ftrj).status.code(), Some(0));
    assert_eq!(run(&desk(), "initial", &init).status.code(), Some(0));
    let a = read_json(&ftrj.join("solution.json"));
    let b = read_json(&init.join("solution.json"));
    assert_eq!(a["plan"], b["plan"]);
    assert_ne!(a["p_k"], b["p_k"]);
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = read_json(&desk());
    scenario["carrier_freq_hz"] = Value::from(-1.0);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&path, "msee_seq", &out_dir);
    assert_eq!(out.status.code(), Some(1));
    let err = read_json(&out_dir.join("error.json"));
    assert_eq!(err["error"], "invalid_scenario");
    assert!(err["field"].as_str().unwrap().contains("carrier_freq_hz"));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = read_json(&desk());
    scenario["altitude"] = Value::from(12.0);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    let out = run(&path, "msee_seq", &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("altitude"));
}

#[test]
fn too_short_mission_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = read_json(&desk());
    scenario["mission_time_s"] = Value::from(2.0);
    let path = dir.path().join("short.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    let out_dir = dir.path().join("out");
    assert_eq!(run(&path, "msee_seq", &out_dir).status.code(), Some(1));
    assert_eq!(read_json(&out_dir.join("error.json"))["error"], "infeasible_mission");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&desk(), "bogus", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("msee_mi"));
}

#[test]
fn check_prints_an_audit() {
    let out = bin().args(["check", "--scenario"]).arg(desk()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let audit: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(audit["pass"], Value::Bool(true));
    assert_eq!(audit["entries"].as_array().unwrap().len(), 14);
}

#[test]
fn sweep_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"axis":"absorption_af","values":[0.005,0.02],"schemes":["initial","fpow"]}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["sweep", "--scenario"])
        .arg(desk())
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "2", "--strict"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,")));
    assert!(out_dir.join("cells/absorption_af=0.02/fpow/solution.json").exists());
}
