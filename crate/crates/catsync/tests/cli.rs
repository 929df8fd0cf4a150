//! End-to-end checks of the command surface: files, manifests, determinism
//! and exit codes, both through the library entry points and the binary.

use catsync::cli::{run_series, run_simulate, run_spectrum, run_trees};
use catsync::config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::Command;

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("catsync-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(n_points: usize) -> RunConfig {
    toml::from_str(&format!(
        r#"
[coupling]
epsilon = 0.05
g = [["sin", 1.0, 0, 0, 1, -1], ["sin", 1.0, 0, 1, 1, 1]]

[grid]
n_phi = 16
n_t = 64

[series]
n_max = 2

[dynamics]
dt = 0.0245436926061703
n_iter = 400
n_transient = 40
seed = 11
n_points = {n_points}
"#
    ))
    .unwrap()
}

#[test]
fn simulate_writes_cloud_and_manifest() {
    let dir = workdir("simulate");
    let cfg = small_config(25);
    let manifest = run_simulate(&cfg, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("points.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x1,x2,w");
    assert_eq!(lines.len(), 26, "header + n_points rows");
    assert_eq!(lines[1].split(',').count(), 3);
    assert!(manifest.files.iter().any(|f| f.name == "points.csv"));
    assert!(dir.join("manifest.json").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn simulate_empty_cloud_has_header_only() {
    let dir = workdir("simulate-empty");
    let cfg = small_config(0);
    run_simulate(&cfg, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("points.csv")).unwrap();
    assert_eq!(csv.trim(), "x1,x2,w");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = workdir("det-a");
    let dir_b = workdir("det-b");
    let cfg = small_config(50);
    run_simulate(&cfg, &dir_a).unwrap();
    run_simulate(&cfg, &dir_b).unwrap();
    let a = std::fs::read(dir_a.join("points.csv")).unwrap();
    let b = std::fs::read(dir_b.join("points.csv")).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(dir_a).unwrap();
    std::fs::remove_dir_all(dir_b).unwrap();
}

#[test]
fn spectrum_single_run_writes_record() {
    let dir = workdir("spectrum");
    let cfg = small_config(10);
    run_spectrum(&cfg, &dir).unwrap();
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("spectrum.json")).unwrap()).unwrap();
    let rec = &body["qr"];
    assert_eq!(rec["method"], "qr_direct");
    assert!(rec["lambda_plus"].as_f64().unwrap() > 0.9);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn series_command_reports_constants_and_caches() {
    let dir = workdir("series");
    let cfg = small_config(10);
    let first = run_series(&cfg, &dir).unwrap();
    assert_eq!(first.diagnostics["cache_hit"], serde_json::Value::Bool(false));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("series_report.json")).unwrap())
            .unwrap();
    assert!((report["w0"].as_f64().unwrap() - 3.14159).abs() < 1e-4);
    assert!((report["gamma"].as_f64().unwrap() + 6.28319).abs() < 1e-4);
    // f = 0: torus norms file omitted, noted in manifest
    assert!(!dir.join("norms_torus.csv").exists());
    assert!(first.notes.iter().any(|n| n.contains("identically zero")));
    // second run hits the cache
    let second = run_series(&cfg, &dir).unwrap();
    assert_eq!(second.diagnostics["cache_hit"], serde_json::Value::Bool(true));
    assert_eq!(first.config_hash, second.config_hash);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn trees_command_certifies_and_renders() {
    let dir = workdir("trees");
    let mut cfg = small_config(10);
    cfg.trees = Some(catsync::config::TreesConfig { n_max: 5, render: true });
    run_trees(&cfg, &dir).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("trees_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
    let sat = report["lemma"]["saturating_orders_found"].as_array().unwrap();
    let sat: Vec<u64> = sat.iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(sat.contains(&2) && sat.contains(&5));
    assert_eq!(report["constructed_order_11"]["internal_u_count"], 7);
    assert_eq!(report["topology_counts"]["n2"]["xi"], 2);
    assert_eq!(report["topology_counts"]["n2"]["a"], 4);
    assert!(dir.join("render").join("saturating_k3.dot").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_catsync");
    let dir = workdir("bin");

    // config error: missing g
    let bad = write_config(&dir, "[coupling]\nepsilon = 0.1\n");
    let out = Command::new(exe)
        .args(["series", "--config", bad.to_str().unwrap(), "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coupling.g required"));

    // hypothesis failure: no dissipation (exit 3)
    let no_dissipation = write_config(
        &dir,
        r#"
[coupling]
epsilon = 0.1
g = [["cos", 1.0, 0, 0, 0, 1]]
[grid]
n_phi = 16
n_t = 64
"#,
    );
    let out = Command::new(exe)
        .args([
            "series",
            "--config",
            no_dissipation.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // success path (exit 0)
    let ok = write_config(
        &dir,
        r#"
[coupling]
epsilon = 0.05
g = [["sin", 1.0, 0, 0, 1, -1], ["sin", 1.0, 0, 1, 1, 1]]
[grid]
n_phi = 16
n_t = 64
[dynamics]
n_points = 5
n_transient = 5
[output]
dir = "unused"
"#,
    );
    let out = Command::new(exe)
        .args([
            "simulate",
            "--config",
            ok.to_str().unwrap(),
            "--out",
            dir.join("ok").to_str().unwrap(),
            "--jobs",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("ok").join("points.csv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}
