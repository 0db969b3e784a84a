//! Integration tests for the command-line interface: exit codes, output
//! files, and seed determinism, exercised through the real binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metricsift"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary failed to spawn")
}

fn synth_bundle(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--seed",
        "7",
        "--services",
        "4",
        "--metrics-per-service",
        "6",
        "--groups",
        "2",
        "--constants",
        "1",
        "--samples",
        "100",
        "--traces",
        "300",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "synth failed: {:?}", out);
}

#[test]
fn analyze_happy_path_writes_reports() {
    let bundle = tempfile::tempdir().unwrap();
    synth_bundle(bundle.path(), &["--anomaly-rate", "0.5"]);
    let outdir = tempfile::tempdir().unwrap();

    let out = run(&[
        "analyze",
        "--metrics",
        bundle.path().join("metrics.csv").to_str().unwrap(),
        "--traces",
        bundle.path().join("traces.jsonl").to_str().unwrap(),
        "--topology",
        bundle.path().join("topology.json").to_str().unwrap(),
        "--labels",
        bundle.path().join("labels.txt").to_str().unwrap(),
        "--eta",
        "10",
        "--export-corr",
        "--out",
        outdir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "analyze failed: {:?}", out);

    for name in [
        "best_subset.json",
        "aimd_log.csv",
        "aimd_log.json",
        "coverage_report.json",
        "summary.txt",
        "correlation_matrix.csv",
    ] {
        assert!(outdir.path().join(name).exists(), "{name} missing");
    }

    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.path().join("best_subset.json")).unwrap())
            .unwrap();
    assert_eq!(best["total_metrics"], 24);
    assert!(best["total_selected"].as_u64().unwrap() > 0);

    let cov: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(outdir.path().join("coverage_report.json")).unwrap(),
    )
    .unwrap();
    assert!(cov["coverage"]["coverage"].as_f64().unwrap() > 0.0);
    assert!(cov["anomaly_coverage"].is_object());
}

#[test]
fn analyze_missing_metrics_exits_one() {
    let bundle = tempfile::tempdir().unwrap();
    synth_bundle(bundle.path(), &[]);
    let outdir = tempfile::tempdir().unwrap();

    let out = run(&[
        "analyze",
        "--metrics",
        bundle.path().join("no_such.csv").to_str().unwrap(),
        "--traces",
        bundle.path().join("traces.jsonl").to_str().unwrap(),
        "--out",
        outdir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest:"), "stderr was: {stderr}");
}

#[test]
fn analyze_traces_outside_topology_exits_one() {
    let bundle = tempfile::tempdir().unwrap();
    synth_bundle(bundle.path(), &[]);
    let other = tempfile::tempdir().unwrap();
    // Topology from a different shape: traces won't validate against it.
    std::fs::write(
        other.path().join("topology.json"),
        r#"{"edges":[["x","y"]]}"#,
    )
    .unwrap();
    let outdir = tempfile::tempdir().unwrap();

    let out = run(&[
        "analyze",
        "--metrics",
        bundle.path().join("metrics.csv").to_str().unwrap(),
        "--traces",
        bundle.path().join("traces.jsonl").to_str().unwrap(),
        "--topology",
        other.path().join("topology.json").to_str().unwrap(),
        "--out",
        outdir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_rejects_branch_probs_over_one() {
    let dir = tempfile::tempdir().unwrap();
    let probs = dir.path().join("branches.json");
    std::fs::write(
        &probs,
        r#"{"branches":[["a","b",0.7],["a","c",0.7],["b","d",1.0],["c","d",1.0]]}"#,
    )
    .unwrap();
    let out = run(&[
        "synth",
        "--branch-probs",
        probs.to_str().unwrap(),
        "--out",
        dir.path().join("bundle").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("synth:"), "stderr was: {stderr}");
}

#[test]
fn synth_same_seed_same_bundle() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_bundle(a.path(), &["--anomaly-rate", "0.3"]);
    synth_bundle(b.path(), &["--anomaly-rate", "0.3"]);

    for name in ["metrics.csv", "traces.jsonl", "topology.json", "labels.txt"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs for identical seeds");
    }
}

fn write_metrics_csv(path: &Path, metric_count: usize) {
    let mut body = String::from("timestamp,microservice,metric,value\n");
    for ts in 0..8 {
        for m in 0..metric_count {
            body.push_str(&format!("{},svc,m{m:02},{}\n", ts * 15, (ts * (m + 1)) % 5));
        }
    }
    std::fs::write(path, body).unwrap();
}

#[test]
fn oracle_rejects_oversized_instances() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    write_metrics_csv(&metrics, 25);
    let out = run(&["oracle", "--metrics", metrics.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("oracle:"), "stderr was: {stderr}");
}

#[test]
fn oracle_compares_greedy_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    write_metrics_csv(&metrics, 6);
    let out = run(&[
        "oracle",
        "--metrics",
        metrics.to_str().unwrap(),
        "--epsilon",
        "0.3",
        "--bins",
        "4",
    ]);
    assert!(out.status.success(), "oracle failed: {:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("greedy:"), "stdout was: {stdout}");
    assert!(stdout.contains("exact:"), "stdout was: {stdout}");
    assert!(stdout.contains("feasible=true"), "stdout was: {stdout}");
}
