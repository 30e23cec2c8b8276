//! End-to-end exercises of the `skembed` binary: exit-code contract,
//! JSON output shape, artifact emission, and a round-trip gap
//! re-verification from the written report.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn skembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skembed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("skembed-pipeline-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn check_ordered_exits_zero() {
    let out = skembed(&["check", data("g5_unit_time.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["ordered"], true);
    assert_eq!(doc["submartingale"]["pass"], true);
}

#[test]
fn check_infeasible_exits_two_with_certificate() {
    let out = skembed(&["check", data("g5_infeasible.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = stdout_json(&out);
    assert_eq!(doc["ordered"], false);
    assert_eq!(doc["certificate"]["verified"], true);
    assert!(doc["certificate"]["margin"].as_f64().unwrap() >= 1e-9);
}

#[test]
fn solve_writes_report_to_out() {
    let dir = temp_dir("solve");
    let out_path = dir.join("doc.json");
    let out = skembed(&[
        "solve",
        data("g5_unit_time.json").to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!((doc["objective"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!(doc["gap"].as_f64().unwrap().abs() <= 1e-8);
    assert_eq!(doc["optimality"]["pass"], true);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn solve_root_with_both_methods_and_barrier() {
    let out = skembed(&["solve", data("g5_root.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert!((doc["objective"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(doc["twist"]["holds"], true);
    assert_eq!(doc["barrier"]["bang_bang"], true);
    assert_eq!(doc["barrier"]["monotone"], true);
    // `method: both` runs the iterative dual as well.
    assert!(doc["dual_iterative"]["gap"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn malformed_input_exits_one() {
    let out = skembed(&["solve", data("malformed.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let doc = stdout_json(&out);
    assert!(doc["error"].as_str().is_some());
}

#[test]
fn ergodic_subcommand() {
    let out = skembed(&["ergodic", data("ergodic_cycle.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert!((doc["value"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(doc["halting_point"], 1);
}

#[test]
fn simulate_subcommand_passes() {
    let out = skembed(&["simulate", data("g5_unit_time.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["pass"], true);
    assert!(doc["tv"].as_f64().unwrap() <= 0.01);
}

#[test]
fn report_writes_artifacts_and_round_trips() {
    let dir = temp_dir("report");
    let out = skembed(&[
        "report",
        data("g5_unit_time.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(dir.join("occupation.csv")).unwrap();
    let svg = std::fs::read_to_string(dir.join("barrier.svg")).unwrap();
    assert!(csv.starts_with("aux,state,u,s,p_stop\n"));
    assert!(svg.starts_with("<svg"));
    // Round trip: the written primal and dual values certify a zero gap
    // independently of the in-process check.
    let objective = report["objective"].as_f64().unwrap();
    let dual_value = report["dual_value"].as_f64().unwrap();
    assert!((objective - dual_value).abs() <= 1e-8);
    // The stopped occupation mass in the CSV re-sums to the target law.
    let mut boundary = 0.0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let x: usize = f[1].parse().unwrap();
        let s: f64 = f[3].parse().unwrap();
        if x == 0 || x == 4 {
            boundary += s;
        }
    }
    assert!((boundary - 1.0).abs() <= 1e-9);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn batch_returns_worst_exit_code() {
    let out = skembed(&[
        "check",
        data("g5_unit_time.json").to_str().unwrap(),
        data("g5_infeasible.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("g5_unit_time.json"));
    assert!(text.contains("g5_infeasible.json"));
}
