use std::fs;
use std::process::{Command, Output};

use umda_lab::experiments::output::{read_trace_csv, Manifest};

fn umda_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umda-lab"))
        .args(args)
        .env_remove("UMDA_LAB_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_prints_summary_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = umda_lab(&[
        "run", "--n", "20", "--lambda", "40", "--mu", "8", "--seed", "3", "--trace", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.contains("success=true"), "{line}");
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.starts_with("iteration,z_mu,z_star,best_true,evals,B\n"));
    let rows = read_trace_csv(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(rows.last().unwrap().best_true, 20);
}

#[test]
fn run_rejects_invalid_parameters() {
    let out = umda_lab(&["run", "--n", "10", "--lambda", "5", "--mu", "5"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("mu < lambda"), "{}", stderr(&out));

    let out = umda_lab(&["run", "--n", "1", "--lambda", "5", "--mu", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("n >= 2"), "{}", stderr(&out));

    let out = umda_lab(&["run", "--n", "10", "--lambda", "5", "--mu", "2", "--noise-p", "1.0"]);
    assert!(!out.status.success());
}

#[test]
fn oracle_maxlo_example() {
    let out = umda_lab(&["oracle", "maxlo", "--n", "3", "--k", "2", "--q", "0.5"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("\"expected_max\":1.421875"), "{}", stdout(&out));
}

#[test]
fn oracle_chain_passes_and_rejects_infeasible_sizes() {
    let out = umda_lab(&["oracle", "chain", "--n", "3", "--lambda", "4"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS"));

    let out = umda_lab(&["oracle", "chain", "--n", "20"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("infeasible"), "{}", stderr(&out));
}

#[test]
fn oracle_noise_expectation() {
    let out = umda_lab(&["oracle", "noise-expectation", "--x", "11011", "--p", "0.3", "--samples", "200000"]);
    assert!(out.status.success(), "{}", stdout(&out));
}

#[test]
fn experiment_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"scenario": "medium_pressure"}"#).unwrap();
    let out = umda_lab(&["experiment", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("scenario"), "{}", stderr(&out));

    fs::write(&cfg, r#"{"scenario": "high_pressure", "replicates": 3}"#).unwrap();
    let out = umda_lab(&["experiment", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("replicates"), "{}", stderr(&out));
}

#[test]
fn experiment_writes_bundle_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("high.json");
    fs::write(&cfg, r#"{"scenario": "high_pressure", "n_values": [20], "replications": 2}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_umda-lab"))
        .args(["experiment", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()])
        .env("UMDA_LAB_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["manifest.json", "runtime.csv", "summary.json", "trace.csv", "plot.svg"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.master_seed, 77);
    assert_eq!(manifest.config.master_seed, 77);
}
