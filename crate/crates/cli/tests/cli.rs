use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn trajadv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajadv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn trajadv")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = trajadv(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_setup(dir: &Path) {
    ok(dir, &["--seed", "7", "gen", "--count", "30", "--out", "data.jsonl"]);
    ok(dir, &["train", "--kind", "constant-velocity", "--data", "data.jsonl", "--out", "cv.json"]);
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| ["gen", "--count", "100", "--past", "4", "--future", "12", "--seed", "7", "--out", out];
    ok(d, &args("a.jsonl"));
    ok(d, &args("b.jsonl"));
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 100);
}

#[test]
fn predicted_targets_are_reached() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_setup(d);
    ok(d, &["predict", "--data", "data.jsonl", "--model", "cv.json", "--out", "targets.jsonl"]);
    ok(
        d,
        &[
            "attack", "--data", "data.jsonl", "--model", "cv.json", "--target", "targets.jsonl", "--tau", "0.02", "--kmax",
            "100", "--init", "zero", "--out", "attack.jsonl",
        ],
    );
    let text = std::fs::read_to_string(d.join("attack.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 30);
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["result"]["final_loss"].as_f64().unwrap() <= 0.02, "{line}");
        assert_eq!(v["result"]["terminated_by"], "threshold");
    }
}

#[test]
fn longer_runs_never_report_worse_losses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_setup(d);
    let eval = |k: &str, out: &str| {
        ok(
            d,
            &["--seed", "3", "eval", "--data", "data.jsonl", "--model", "cv.json", "--lateral-shift", "1.5", "--kmax", k, "--out-dir", out],
        );
        let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join(out).join("metrics.json")).unwrap()).unwrap();
        report["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["J_bar"].as_f64().unwrap())
            .collect::<Vec<_>>()
    };
    let short = eval("10", "k10");
    let long = eval("100", "k100");
    assert_eq!(short.len(), 30);
    for (a, b) in long.iter().zip(&short) {
        assert!(a <= b, "{a} > {b}");
    }
    let csv = std::fs::read_to_string(d.join("k10/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scenario_id,J_acc_nom,J_GY,J_bar,iterations,wall_time_s,optimizer,K_max");
    let traces = std::fs::read_to_string(d.join("k10/traces.csv")).unwrap();
    assert_eq!(traces.lines().next().unwrap(), "scenario_id,iteration,loss");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trajadv(dir.path(), &["gen", "--bogus", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_setup(d);
    let out = trajadv(
        d,
        &["attack", "--data", "data.jsonl", "--model", "cv.json", "--lateral-shift", "1", "--tau", "-1", "--out", "a.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("a.jsonl").exists());
}

#[test]
fn missing_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trajadv(dir.path(), &["--json-errors", "stats", "--data", "absent.jsonl", "--out", "b.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "missing_file");
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn horizon_mismatch_names_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_setup(d);
    ok(d, &["gen", "--count", "5", "--past", "6", "--out", "long.jsonl"]);
    let out = trajadv(d, &["predict", "--data", "long.jsonl", "--model", "cv.json", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s00000"));
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_setup(d);
    ok(d, &["stats", "--data", "data.jsonl", "--out", "bounds.json"]);
    ok(d, &["replay", "--manifest", "bounds.json.manifest.json"]);
    ok(d, &["--seed", "8", "gen", "--count", "30", "--out", "data.jsonl"]);
    let out = trajadv(d, &["--json-errors", "replay", "--manifest", "bounds.json.manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "input_changed");
}

#[test]
fn manifest_records_seed_and_digests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "5", "gen", "--count", "3", "--out", "d.jsonl"]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(d.join("d.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["command"], "gen");
    assert_eq!(m["config"]["gen"]["count"], 3);
    let digest = m["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}
