//! CLI behavior: exit codes and file handling.

use std::path::Path;
use std::process::{Command, Output};

fn cellcache(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellcache"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellcache(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-instance"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cellcache(&["no-such-command"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        cellcache(&["gen-instance", "--bogus-flag"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn missing_input_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellcache(
        &["gen-demands", "--instance", "absent.toml", "--out", "w"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_instances_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Negative UA entry: loads, fails validation.
    std::fs::write(
        dir.path().join("bad.toml"),
        concat!(
            "schema = \"cellcache/instance\"\n",
            "version = 1\n",
            "num_stations = 1\n",
            "content_sizes = [1.0]\n",
            "ua = [[0.0, -5.0]]\n",
            "caching_cost = [[1.0]]\n",
        ),
    )
    .unwrap();
    let out = cellcache(
        &["gen-demands", "--instance", "bad.toml", "--out", "w"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative"));
}

#[test]
fn schema_mismatches_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("odd.toml"),
        "schema = \"other\"\nversion = 1\n",
    )
    .unwrap();
    let out = cellcache(
        &["gen-demands", "--instance", "odd.toml", "--out", "w"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_enumeration_exits_two_with_partial_flush() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("big.toml"),
        "runs = 2\n[instance]\nnum_stations = 22\n[workload]\nnum_contents = 1\n",
    )
    .unwrap();
    let out = cellcache(
        &["experiment", "--config", "big.toml", "--out", "w"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("enumeration limit"));
    assert!(dir.path().join("w/manifest.toml").exists());
    assert!(dir.path().join("w/results.csv").exists());
}

#[test]
fn sweep_writes_a_curve() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "runs = 2\n[instance]\nnum_stations = 4\n[workload]\nnum_contents = 2\nusers_per_station = 20.0\n",
    )
    .unwrap();
    let out = cellcache(
        &[
            "experiment",
            "--config",
            "cfg.toml",
            "--sweep",
            "zeta=0.5,1.5",
            "--out",
            "w",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let curve = std::fs::read_to_string(dir.path().join("w/curve_zeta.csv")).unwrap();
    assert!(curve.starts_with("value,online,offline_collab,noncollab"));
    assert_eq!(curve.lines().count(), 3);
}

#[test]
fn scheme_and_error_model_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "runs = 2\n[instance]\nnum_stations = 4\n[workload]\nnum_contents = 2\nusers_per_station = 20.0\n",
    )
    .unwrap();
    let out = cellcache(
        &[
            "experiment",
            "--config",
            "cfg.toml",
            "--scheme",
            "offline-collab",
            "--scheme",
            "noncollab",
            "--error-model",
            "uniform:0.5",
            "--out",
            "w",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let results = std::fs::read_to_string(dir.path().join("w/results.csv")).unwrap();
    assert!(!results.contains("online"));
    assert!(results.contains("offline-collab"));
    let manifest = std::fs::read_to_string(dir.path().join("w/manifest.toml")).unwrap();
    assert!(manifest.contains("uniform"));
}
