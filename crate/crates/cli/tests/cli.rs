use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn secrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secrl")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn error_record(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_testcase_writes_frozen_cases() {
    let dir = tempfile::tempdir().unwrap();
    let o = secrl(&[
        "gen-testcase", "--out", s(dir.path()), "--seed", "9",
        "--override", "run.env=\"motor\"", "--kind", "motor-steadystate",
    ]);
    let v = stdout_json(&o);
    let files = v["files"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    assert!(files[0].as_str().unwrap().ends_with("motor-steadystate-9.json"));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = secrl(&[
        "train", "--out", s(&run), "--seed", "4", "--variant", "sec-ddpg",
        "--override", "run.env=\"motor\"", "--override", "train.total_steps=100",
        "--override", "agent.critic_neurons=16",
    ]);
    let v = stdout_json(&o);
    assert_eq!(v["steps"], 100);
    assert_eq!(v["seed"], 4);
    assert!(run.join("checkpoint.bin").exists());

    let ev = dir.path().join("eval");
    let o = secrl(&[
        "eval", "--out", s(&ev), "--policy", s(&run), "--override", "run.env=\"motor\"",
        "--override", "eval.write_trajectories=false", "--override", "agent.critic_neurons=16",
    ]);
    let v = stdout_json(&o);
    let segments = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["test_case_id"].as_str().unwrap().starts_with("motor-steadystate"))
        .filter(|r| r["metric_name"].as_str().unwrap().starts_with("segment_"))
        .count();
    assert_eq!(segments, 20);
    assert!(ev.join("report.csv").exists());
}

#[test]
fn compare_summarizes_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let o = secrl(&[
        "compare", "--out", s(dir.path()),
        "--override", "run.env=\"motor\"", "--override", "run.variants=[\"ddpg\", \"sec-ddpg\", \"pi\"]",
        "--override", "run.seeds=[1, 2, 3]", "--override", "train.total_steps=50",
        "--override", "agent.critic_neurons=16", "--override", "eval.profile_steps=1000",
        "--override", "eval.write_trajectories=false",
    ]);
    let v = stdout_json(&o);
    assert_eq!(v["seeds"], serde_json::json!([1, 2, 3]));
    for variant in ["ddpg", "sec-ddpg", "pi"] {
        assert!(v["statistics"][variant].is_object(), "{variant}");
    }
    assert!(!v["comparison"].as_array().unwrap().is_empty());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn failures_exit_nonzero_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = secrl(&["train", "--out", s(dir.path()), "--override", "agent.gamma=1.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "config");

    let o = secrl(&["eval", "--policy", s(&dir.path().join("missing.json"))]);
    assert!(!o.status.success());
    assert!(error_record(&o)["message"].is_string());

    let o = secrl(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "usage");
}
