use std::path::Path;
use std::process::{Command, Output};

use kpz_core::experiment::{ExperimentConfig, ExperimentKind};

fn kpz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpz")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let mut c = ExperimentConfig::new(ExperimentKind::BulkKpz, 32, 1.0, 2);
    c.centers = 4;
    c.fit.window = Some((1e-3, 1.0));
    let path = dir.join("bulk.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn successful_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = kpz(&["bulk-kpz", "--config", &config, "--skip-classical-gate", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["series.csv", "summary.json", "local_slopes.csv", "metrics.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn bad_parameters_exit_with_config_error() {
    let o = kpz(&["bulk-kpz", "--gamma", "2.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_config_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let o = kpz(&["box-count", "--config", &config]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_classical_gate_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = kpz(&["bulk-kpz", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
