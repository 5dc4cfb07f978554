//! End-to-end runs of the `qsynth` binary.

use std::path::Path;
use std::process::{Command, Output};

const QSYNTH: &str = env!("CARGO_BIN_EXE_qsynth");

fn models() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(QSYNTH).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

#[test]
fn exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["synth", "--lts", &model("fig2.lts"), "--out", out]), 0);
    assert_eq!(code(&["synth", "--lts", &model("fig1.lts"), "--out", out]), 11);
    assert_eq!(code(&["synth", "--model", &model("ex33.qsm"), "--out", out]), 0);
    assert_eq!(code(&["synth", "--model", &model("ex33.qsm"), "--levels", "x=2", "--out", out]), 10);
}

#[test]
fn usage_and_internal_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["abstract", "--model", &model("ex33.qsm"), "-p", "0", "--out", out]), 2);
    assert_eq!(code(&["abstract", "--model", &model("ex33.qsm"), "--bits", "3", "--levels", "x=2"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    let missing = dir.path().join("nope.qsm");
    let o = run(&["synth", "--model", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.qsm"));
}

#[test]
fn synth_writes_the_controller_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["synth", "--model", &model("ex33.qsm"), "--out", out]), 0);
    assert!(dir.path().join("controller.qctl").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("synth.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "Sol");
    assert_eq!(summary["states"], 7);
    assert_eq!(summary["max_j"], 4);
}

fn abstraction_bytes(extra: &[&str]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["abstract", "--builtin", "buck", "--bits", "6", "--out", out];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(dir.path().join("abstraction.qsa")).unwrap()
}

#[test]
fn abstraction_file_does_not_depend_on_workers() {
    let serial = abstraction_bytes(&[]);
    assert_eq!(abstraction_bytes(&["-p", "4"]), serial);
    assert_eq!(abstraction_bytes(&["-p", "3", "--mode", "multiproc"]), serial);
}

#[test]
fn pipeline_from_model_to_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = model("ex33.qsm");
    assert_eq!(code(&["abstract", "--model", &m, "--out", out]), 0);
    let qsa = format!("{out}/abstraction.qsa");
    assert_eq!(code(&["synth", "--model", &m, "--abstraction", &qsa, "--out", out]), 0);
    let qctl = format!("{out}/controller.qctl");
    assert_eq!(code(&["codegen", "--model", &m, "--controller", &qctl, "--out", out]), 0);
    for f in ["control.json", "control.h", "control.c"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let table = format!("{out}/control.json");
    let o = run(&["simulate", "--model", &m, "--table", &table, "--runs", "10", "--in-domain", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulation.json")).unwrap()).unwrap();
    assert_eq!(sim["runs"], 10);
    assert_eq!(sim["reached"], 10);
    assert_eq!(sim["late"], 0);
    assert!(dir.path().join("traces/run_0000.csv").exists());
}

#[test]
fn stale_abstraction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let m = model("ex33.qsm");
    assert_eq!(code(&["abstract", "--model", &m, "--out", out]), 0);
    let qsa = format!("{out}/abstraction.qsa");
    assert_ne!(code(&["synth", "--model", &m, "--levels", "x=5", "--abstraction", &qsa, "--out", out]), 0);
}

#[test]
fn report_has_the_expected_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["report", "--model", &model("ex33.qsm"), "--workers-list", "2", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "b,CPU Ctrabs,p,CT,IO,Speedup,Efficiency,CPU K");
    // The p = 1 baseline is run for the speedup but only listed when asked for.
    assert_eq!(lines.len(), 2);
    assert!(lines[1].split(',').nth(2) == Some("2"));
    assert!(dir.path().join("busy.csv").exists());
}
