use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edpm_cli::manifest::{sha256_hex, RunManifest};

fn edpm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edpm"))
        .current_dir(dir)
        .env_remove("EDPM_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn hashes(dir: &Path) -> BTreeMap<String, String> {
    manifest(dir).artifacts.into_iter().map(|a| (a.path, a.sha256)).collect()
}

#[test]
fn min_trunc_example() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(
        t.path(),
        &["min-trunc", "--n", "200", "--alpha-theta", "0.5", "--alpha-psi", "0.5", "--eps", "0.01", "--out", "o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("N=7 M=7"), "{}", stdout(&o));
    let m = manifest(&t.path().join("o"));
    assert_eq!(m.subcommand, "min-trunc");
    assert!(m.artifacts.iter().any(|a| a.path == "min_trunc.json"));
}

#[test]
fn bounds_example() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(
        t.path(),
        &["bounds", "--n", "200", "--N", "10", "--M", "10", "--alpha-theta", "0.5", "--alpha-psi", "0.5", "--out", "o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("2.437e-5"), "{}", stdout(&o));
    // the minimal pair is reported alongside
    assert!(stdout(&o).contains("N=7 M=7"));
    let j: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("o/bounds.json")).unwrap()).unwrap();
    assert!((j["bound"].as_f64().unwrap() - 2.437e-5).abs() < 5e-9);
}

#[test]
fn bounds_json_and_monte_carlo() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(
        t.path(),
        &[
            "bounds", "--n", "1", "--N", "4", "--M", "3", "--alpha-theta", "0.7", "--alpha-psi", "2",
            "--mc-draws", "20000", "--json", "--out", "o",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (at, ap) = (0.7 / 1.7, 2.0 / 3.0);
    let exact = 4.0 * (1.0 - (1.0 - f64::powi(at, 3)) * (1.0 - f64::powi(ap, 2)));
    let est = j["mc"]["estimate"].as_f64().unwrap();
    let se = j["mc"]["stderr"].as_f64().unwrap();
    assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact}");
}

#[test]
fn no_arguments_prints_usage() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(t.path(), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = edpm(t.path(), &["frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_config_key_is_a_config_error_and_writes_nothing() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("c.json"), r#"{"seed": 1, "alpha_thета": 0.5}"#).unwrap();
    let o = edpm(t.path(), &["bounds", "--config", "c.json", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha_thета"), "{}", stderr(&o));
    assert!(!t.path().join("o").exists());
}

#[test]
fn invalid_values_fail_before_writing() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(t.path(), &["min-trunc", "--eps", "2", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let o = edpm(t.path(), &["simulate", "--p", "0", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    edpm(t.path(), &["simulate", "--p", "1", "--n", "30", "--out", "sim"]);
    let o = edpm(
        t.path(),
        &["fit-blocked", "--data", "sim/data.csv", "--iterations", "10", "--burn-in", "10", "--out", "o"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("chain.burn_in"), "{}", stderr(&o));
    let o = edpm(t.path(), &["fit-blocked", "--iterations", "10", "--burn-in", "1", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data"));
    assert!(!t.path().join("o").exists());
}

#[test]
fn missing_and_malformed_inputs_are_io_errors() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(t.path(), &["fit-polya", "--data", "nope.csv", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4));
    fs::write(t.path().join("bad.csv"), "y,x2\n1,2\n").unwrap();
    let o = edpm(t.path(), &["fit-polya", "--data", "bad.csv", "--out", "o"]);
    assert_eq!(o.status.code(), Some(4));
    let o = edpm(t.path(), &["bounds", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!t.path().join("o").exists());
}

#[test]
fn output_dir_from_environment() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_edpm"))
        .current_dir(t.path())
        .env("EDPM_OUT_DIR", "from-env")
        .args(["min-trunc", "--n", "2000", "--alpha-theta", "3", "--alpha-psi", "3"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("N=44 M=44"), "{}", stdout(&o));
    assert!(t.path().join("from-env/manifest.json").exists());
    // --out wins over the environment
    let o = Command::new(env!("CARGO_BIN_EXE_edpm"))
        .current_dir(t.path())
        .env("EDPM_OUT_DIR", "from-env2")
        .args(["min-trunc", "--out", "flag"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(t.path().join("flag/manifest.json").exists());
    assert!(!t.path().join("from-env2").exists());
}

#[test]
fn flags_override_config() {
    let t = tempfile::tempdir().unwrap();
    fs::write(
        t.path().join("c.json"),
        r#"{"bounds.n": 200, "bounds.alpha_theta": 0.5, "bounds.alpha_psi": 0.5, "bounds.eps": 0.5}"#,
    )
    .unwrap();
    let o = edpm(t.path(), &["min-trunc", "--config", "c.json", "--eps", "0.01", "--out", "o"]);
    assert!(stdout(&o).contains("N=7 M=7"), "{}", stdout(&o));
    let m = manifest(&t.path().join("o"));
    assert_eq!(m.parameters["bounds.eps"], serde_json::json!(0.01));
    assert_eq!(m.config_path.as_deref(), Some("c.json"));
}

#[test]
fn fit_predict_diagnose_pipeline_reproduces() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let o = edpm(d, &["simulate", "--p", "2", "--n", "60", "--seed", "4", "--out", "sim"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = fs::read_to_string(d.join("sim/data.csv")).unwrap();
    assert!(data.starts_with("y,x1,x2\n"));
    assert_eq!(data.lines().count(), 61);

    let fit = |out: &str| {
        edpm(
            d,
            &[
                "fit-blocked", "--data", "sim/data.csv", "--iterations", "150", "--burn-in", "50", "--N", "4",
                "--M", "6", "--seed", "9", "--out", out,
            ],
        )
    };
    let o = fit("a");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fit("b").status.success());
    assert_eq!(hashes(&d.join("a")), hashes(&d.join("b")));
    let chain = fs::read_to_string(d.join("a/chain.jsonl")).unwrap();
    assert_eq!(chain.lines().count(), 100);
    assert!(chain.lines().next().unwrap().contains("\"representation\":\"blocked\""));

    // rerun from the recorded configuration only
    let o = edpm(d, &["fit-blocked", "--config", "a/config.json", "--out", "c"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ha = hashes(&d.join("a"));
    assert_eq!(ha, hashes(&d.join("c")));
    for (path, h) in &ha {
        assert_eq!(&sha256_hex(&fs::read(d.join("c").join(path)).unwrap()), h);
    }

    let o = edpm(d, &["fit-polya", "--data", "sim/data.csv", "--iterations", "120", "--burn-in", "20", "--out", "pu"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain = fs::read_to_string(d.join("pu/chain.jsonl")).unwrap();
    assert!(chain.lines().next().unwrap().contains("\"representation\":\"urn\""));

    for src in ["a", "pu"] {
        let out = format!("pred-{src}");
        let o = edpm(d, &["predict", "--chain", &format!("{src}/chain.jsonl"), "--x", "sim/data.csv", "--out", &out]);
        assert!(o.status.success(), "{}", stderr(&o));
        let pred = fs::read_to_string(d.join(&out).join("predict.csv")).unwrap();
        let mut lines = pred.lines();
        assert_eq!(lines.next(), Some("id,mean,q025,q25,q75,q975"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 60);
        for r in &rows {
            assert!(r[2] <= r[3] && r[3] <= r[4] && r[4] <= r[5]);
        }
    }

    let o = edpm(d, &["diagnose", "--chain", "a/chain.jsonl", "--out", "diag"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("suggested truncation"));
    let j: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("diag/diagnose.json")).unwrap()).unwrap();
    assert_eq!(j["draws"], 100);

    // covariate count mismatch
    fs::write(d.join("x3.csv"), "x1,x2,x3\n1,2,3\n").unwrap();
    let o = edpm(d, &["predict", "--chain", "a/chain.jsonl", "--x", "x3.csv", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!d.join("bad").exists());
}

#[test]
fn auto_truncation_from_config() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    edpm(d, &["simulate", "--p", "1", "--n", "40", "--out", "sim"]);
    fs::write(
        d.join("c.json"),
        r#"{"data": "sim/data.csv", "trunc.mode": "auto", "trunc.eps": 0.05,
            "pilot.iterations": 100, "pilot.burn_in": 20, "pilot.n": 5, "pilot.m": 5,
            "chain.iterations": 60, "chain.burn_in": 10}"#,
    )
    .unwrap();
    let o = edpm(d, &["fit-blocked", "--config", "c.json", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pilot estimates"));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("o/fit.json")).unwrap()).unwrap();
    assert!(fit["pilot_concentrations"].is_array());
    assert_eq!(fit["draws"], 50);
}

#[test]
fn tiny_study() {
    let t = tempfile::tempdir().unwrap();
    let o = edpm(
        t.path(),
        &[
            "study", "--ps", "1", "--datasets", "2", "--n", "30", "--test-size", "10", "--iterations", "220",
            "--burn-in", "20", "--batch-size", "50", "--sampler", "blocked:3:3", "--sampler", "urn", "--out", "s",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&t.path().join("s"));
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    for f in ["report.json", "cells.csv", "accuracy.csv", "mixing.csv", "figure.csv", "config.json"] {
        assert!(files.contains(&f), "{files:?}");
    }
    let acc = fs::read_to_string(t.path().join("s/accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 3);
}
