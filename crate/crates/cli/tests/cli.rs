//! Exit codes and determinism of the command-line front end.

use std::path::Path;
use std::process::Command;

fn mcflab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcflab"))
}

fn run_in(out: &Path, args: &[&str]) -> std::process::Output {
    mcflab()
        .args(args)
        .env("MCFLAB_OUT", out)
        .output()
        .expect("spawn mcflab")
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["--config", "/nonexistent/config.json", "build-peanut"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"peanut": {"m": 4, "dimension": 3, "k0": 1.0, "rho": 0.25, "delta": -1.0,
            "ell_int": 5.0, "tau0": 16.6, "tip_a": 0.35, "tip_c1": 10.0}}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "build-peanut"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_without_archive_is_a_missing_artifact_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--angle", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn build_then_run_produces_manifests_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["build-peanut"]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let archive = dir.path().join("peanut/archive.json");
    assert!(archive.exists());
    assert!(dir.path().join("peanut/curve.csv").exists());
    assert!(dir.path().join("peanut/shooting_trace.jsonl").exists());

    // a second build in a fresh root is byte-identical
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = run_in(dir2.path(), &["build-peanut"]);
    assert_eq!(out2.status.code(), Some(0));
    let a = std::fs::read(&archive).unwrap();
    let b = std::fs::read(dir2.path().join("peanut/archive.json")).unwrap();
    assert_eq!(a, b, "archives differ between identical builds");
    let a = std::fs::read(dir.path().join("peanut/curve.csv")).unwrap();
    let b = std::fs::read(dir2.path().join("peanut/curve.csv")).unwrap();
    assert_eq!(a, b, "curves differ between identical builds");

    // a run writes its manifest and succeeds
    let out = run_in(dir.path(), &["run", "--angle", "-1.5707963267948966"]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let manifest_dir = dir.path().join("run_angle_-1.570796");
    let manifest = std::fs::read_to_string(manifest_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("Spherical"));
    assert!(manifest.contains("\"config\""));
    assert!(manifest_dir.join("funnel_trace.csv").exists());

    // export works off the archive
    let out = run_in(dir.path(), &["export"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("bowl.csv").exists());
    assert!(dir.path().join("peanut_curve.csv").exists());
}

#[test]
fn sweep_is_deterministic_across_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["build-peanut"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run_in(dir.path(), &["sweep", "--angles", "4"]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let first = std::fs::read(dir.path().join("sweep.csv")).unwrap();
    let out = run_in(dir.path(), &["sweep", "--angles", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let second = std::fs::read(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(first, second, "sweep outputs differ between identical runs");
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("epsilon,angle,tau1,d0,d2,class"));
    assert_eq!(text.lines().count(), 5);
}
