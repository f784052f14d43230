//! End-to-end runs of the `khessian` binary.

use std::path::Path;
use std::process::{Command, Output};

fn khessian(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_khessian")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn predict_prints_the_exact_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.cfg", "n = 3\nk = 2\na = 4\nb = 4\n");
    let out = dir.path().join("out");
    let o = khessian(&["predict", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("7/4"), "{stdout}");
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("quantity,value,exact"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "bad.cfg", "no_such_key = 1\n");
    assert_eq!(khessian(&["solve", "--config", &unknown]).status.code(), Some(2));
    let twice = write(dir.path(), "twice.cfg", "h = 1/32\nsolver.h = 1/64\n");
    assert_eq!(khessian(&["solve", "--config", &twice]).status.code(), Some(2));
    let mismatch = write(dir.path(), "mismatch.cfg", "command = predict\n");
    assert_eq!(khessian(&["solve", "--config", &mismatch]).status.code(), Some(2));
    assert_eq!(khessian(&["run"]).status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "h = 1/64\nb = 5\nseed = 7\n");
    let first = khessian(&["solve", "--config", &cfg, "--print-config"]);
    assert!(first.status.success());
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("solver.h = 1/64") && text.contains("seed = 7"), "{text}");
    let again = write(dir.path(), "again.cfg", &text);
    let second = khessian(&["run", "--config", &again, "--print-config"]);
    assert!(second.status.success());
    assert_eq!(String::from_utf8(second.stdout).unwrap(), text);
}

/// Runs once from a config, then again from the first run's manifest, and compares `results.csv`.
fn rerun_from_manifest(command: &str, cfg_text: &str) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", cfg_text);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = khessian(&[command, "--config", &cfg, "--out", first.to_str().unwrap(), "--reproducible"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = first.join("manifest.json");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], command);
    assert_eq!(m["reproducible"], true);
    let o = khessian(&["run", "--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(first.join("results.csv")).unwrap();
    let b = std::fs::read(second.join("results.csv")).unwrap();
    assert_eq!(a, b);
    for name in ["report.json", "summary.txt", "timing.json"] {
        assert!(first.join(name).exists(), "{name} missing");
    }
}

#[test]
fn algebra_suite_reruns_identically() {
    rerun_from_manifest("algebra-suite", "suite.samples = 300\nsuite.key_samples = 300\nseed = 11\n");
}

#[test]
fn solve_reruns_identically() {
    rerun_from_manifest("solve", "h = 1/32\ntol = 1e-8\nrhs = constant:3\n");
}

#[test]
fn gallery_utilities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.cfg", "n = 3\nk = 2\na = 4\nb = 4\ngamma = 1\n");
    let o = khessian(&["gallery", "eval", "--config", &cfg, "--point", "0,0,0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!(v.is_finite() && v >= 0.0);
    let o = khessian(&["gallery", "predict", "--config", &cfg]);
    let pred: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((pred["theta"].as_f64().unwrap() - 1.75).abs() < 1e-12);
    let o = khessian(&["gallery", "eval", "--config", &cfg, "--point", "0,0"]);
    assert_eq!(o.status.code(), Some(2));
}
