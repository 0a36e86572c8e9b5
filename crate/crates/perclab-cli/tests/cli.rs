use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn perclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perclab")).args(args).output().expect("spawn perclab")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn theta_prints_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 0.3, "q": 0.6, "samples": 20000}"#);
    let o = perclab(&["theta", "--config", &cfg, "--assert"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(perclab::estimators::CSV_HEADER));
    assert!(lines.next().unwrap().starts_with("theta,2,1,"));
    assert!(stderr(&o).contains("exact 0.921600"));
}

#[test]
fn json_format_embeds_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 0.5, "q": 0.5, "samples": 100}"#);
    let o = perclab(&["theta", "--config", &cfg, "--format", "json", "--seed", "42", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["command"], "theta");
    assert_eq!(doc["config"]["seed"], 42);
    assert_eq!(doc["config"]["samples"], 100);
    assert!(doc["config"].get("workers").is_none());
    assert_eq!(doc["records"].as_array().unwrap().len(), 1);
}

#[test]
fn out_stem_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"runs": 3}"#);
    let stem = dir.path().join("nested/run");
    let o = perclab(&["renorm", "--config", &cfg, "--out", stem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("renorm:"));
    for ext in ["csv", "json", "trace.jsonl"] {
        assert!(stem.with_extension(ext).exists(), "{ext}");
    }
    let trace = std::fs::read_to_string(stem.with_extension("trace.jsonl")).unwrap();
    for line in trace.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["sample"].is_u64());
    }
}

#[test]
fn full_parameters_cross() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 1.0, "q": 1.0, "L": 8, "samples": 50}"#);
    let o = perclab(&["crossing", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[7], "1");
    assert_eq!(row[8], "0");
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 0.3, "q": 0.6, "smaples": 10}"#);
    let o = perclab(&["theta", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("smaples"), "{}", stderr(&o));
}

#[test]
fn bad_values_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for (text, field) in [
        (r#"{"p": 1.5, "q": 0.6}"#, "`p`"),
        (r#"{"grid": [[0.1, 0.2], [0.3, -1.0]]}"#, "grid[1][1]"),
        (r#"{"p": 0.3, "q": 0.6, "d": 0}"#, "`d`"),
        (r#"{"p": 0.3, "q": 0.6, "samples": "many"}"#, "samples"),
    ] {
        let cfg = write_config(dir.path(), "c.json", text);
        let o = perclab(&["theta", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(field), "{text}: {}", stderr(&o));
    }
    let o = perclab(&["theta", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = perclab(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    let o = perclab(&[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_parameter_is_a_config_error() {
    let o = perclab(&["theta"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`p`"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 0.3, "q": 0.6, "samples": 10}"#);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let stem = blocker.join("out");
    let o = perclab(&["theta", "--config", &cfg, "--out", stem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn failed_check_exits_four_only_with_assert() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"d": 3, "s": 2, "L": 2, "p": 0.9, "q": 0.9, "samples": 20}"#);
    let o = perclab(&["certificate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("check failed"));
    let o = perclab(&["certificate", "--config", &cfg, "--assert"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn command_may_come_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"command": "mtp-check", "transport": "same_h_cluster", "d": 3, "s": 2, "p": 0.3, "q": 0.6, "samples": 50}"#);
    let o = perclab(&["--config", &cfg, "--assert"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mtp_delta"));
}

#[test]
fn seeds_reproduce_and_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"p": 0.4, "q": 0.4, "L": 12, "samples": 500}"#);
    let run = |seed: &str| perclab(&["crossing", "--config", &cfg, "--seed", seed]).stdout;
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}
