use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spotrelease::calibration::{CalibrationInput, ThroughputStats};
use spotrelease::state::AirportConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotrelease")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_toy(dir: &Path) -> String {
    let path = dir.join("toy.json");
    fs::write(&path, AirportConfig::toy().to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn build_writes_kernel_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path());
    let out = dir.path().join("build");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "build"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kernel_report.json")).unwrap()).unwrap();
    assert_eq!(report["states"], 4);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    let kernel = fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert!(kernel.starts_with("i,k,j,p"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "build");
    assert!(manifest["outputs"]["kernel.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["build"])), 2);
    assert_eq!(code(&run(&["--config", "/nonexistent/airport.json", "build"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"taxiway_len": 0}"#).unwrap();
    assert_eq!(code(&run(&["--config", bad.to_str().unwrap(), "build"])), 2);
    let mut cfg = AirportConfig::toy();
    cfg.queue_capacity = 0;
    fs::write(&bad, cfg.to_json()).unwrap();
    assert_eq!(code(&run(&["--config", bad.to_str().unwrap(), "build"])), 2);
    let toy = write_toy(dir.path());
    assert_eq!(code(&run(&["--config", &toy, "threshold", "--th", "0"])), 2);
    assert_eq!(code(&run(&["--config", &toy, "simulate", "--policy", "threshold:x"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"airport": "toy.json", "betas": [], "thresholds": [1], "output_dir": "out"}"#).unwrap();
    assert_eq!(code(&run(&["run", spec.to_str().unwrap()])), 2);
}

#[test]
fn calibration_without_real_solution_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut input = CalibrationInput::laguardia();
    input.throughput = ThroughputStats { mean_rate: 0.605, std_rate: 0.1 };
    let path = dir.path().join("cal.json");
    fs::write(&path, serde_json::to_string(&input).unwrap()).unwrap();
    let o = run(&["calibrate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no real solution"));

    fs::write(&path, serde_json::to_string(&CalibrationInput::laguardia()).unwrap()).unwrap();
    let o = run(&["calibrate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["N"], serde_json::json!([9, 3]));
    assert_eq!(report["B"], 7);
}

#[test]
fn solve_threshold_simulate_and_emissions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path());
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(code(&run(&["--config", &cfg, "--out", o, "solve", "--beta", "1,10"])), 0);
    let policy = out.join("policies/policy_beta_10.csv");
    assert!(policy.exists());
    assert_eq!(code(&run(&["--config", &cfg, "--out", o, "threshold", "--th", "1,2", "--beta", "2"])), 0);
    let thr = fs::read_to_string(out.join("threshold_metrics.csv")).unwrap();
    assert_eq!(thr.lines().count(), 3);
    let sim_args = ["--steps", "20000", "--warmup", "1000"];
    let mut args = vec!["--config", &cfg, "--out", o, "--seed", "5", "simulate", "--policy", policy.to_str().unwrap()];
    args.extend(sim_args);
    assert_eq!(code(&run(&args)), 0);
    assert!(out.join("congestion.csv").exists());
    let mut args = vec!["--config", &cfg, "--out", o, "mls", "--beta", "10", "--trajectory"];
    args.extend(sim_args);
    assert_eq!(code(&run(&args)), 0);
    let traj = fs::read_to_string(out.join("mls_trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,observation_index,mls_state,decision"));

    let cmp = dir.path().join("comparison.csv");
    fs::write(
        &cmp,
        "utilization,avg_taxiing_threshold,avg_taxiing_optimal,avg_taxiing_mls,reduction_percent\n0.9,5.0,4.8,,4\n",
    )
    .unwrap();
    let o2 = run(&["--out", o, "emissions", cmp.to_str().unwrap(), "--factor", "2.5"]);
    assert_eq!(code(&o2), 0, "{}", String::from_utf8_lossy(&o2.stderr));
    let em = fs::read_to_string(out.join("emissions.csv")).unwrap();
    let row: Vec<f64> = em.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[1], 12.5);
    assert_eq!(row[2], 12.0);
    assert!((row[3] - 0.5).abs() < 1e-12);
    assert_eq!(code(&run(&["--out", o, "emissions", cmp.to_str().unwrap(), "--factor", "-1"])), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"airport": "toy.json", "betas": [0.5, 3, 10], "thresholds": [1, 2],
            "sim": {"steps": 30000, "warmup": 1000, "seed": 9, "replications": 2},
            "output_dir": "out", "emissions_factor": 1.0}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["--out", d.to_str().unwrap(), "run", spec.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut files: Vec<_> = walk(&a);
    files.sort();
    assert!(files.len() >= 8);
    for f in files {
        let rel = f.strip_prefix(&a).unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.join(rel)).unwrap(), "{} differs", rel.display());
    }
    // A different seed changes the simulated columns.
    let c = dir.path().join("c");
    assert_eq!(code(&run(&["--out", c.to_str().unwrap(), "--seed", "10", "run", spec.to_str().unwrap()])), 0);
    assert_ne!(fs::read(a.join("records.csv")).unwrap(), fs::read(c.join("records.csv")).unwrap());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
