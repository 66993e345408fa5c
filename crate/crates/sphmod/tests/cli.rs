use std::fs;
use std::process::{Command, Output};

fn sphmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphmod")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn catalog_lists_every_example() {
    let o = sphmod(&["catalog"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["S1", "S2", "S3", "S4", "L1", "B1", "B2", "B3", "B4", "E1", "E2", "E3", "E4", "E5", "E6"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing");
    }
}

#[test]
fn modulus_writes_curve_and_fit() {
    let o = sphmod(&["modulus", "--example", "S2", "--d", "3", "--p", "2", "--alpha", "0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("# provenance "));
    assert!(csv.contains("\"version\":\"0.1.0\""));
    assert!(csv.lines().any(|l| l == "t,value"));
    let report: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    let slope = report["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 1.5).abs() < 0.1, "slope {slope}");
    assert_eq!(report["expected"]["exponent"].as_f64(), Some(1.5));
}

#[test]
fn above_strip_still_runs() {
    let o = sphmod(&["modulus", "--example", "S2", "--alpha", "2", "--tsteps", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(report["expected"]["exponent"].as_f64(), Some(2.0));
    assert!((report["fit"]["slope"].as_f64().unwrap() - 2.0).abs() < 0.1);
}

#[test]
fn validation_failures_exit_one() {
    let o = sphmod(&["modulus", "--example", "S2", "--alpha", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zero exponent excluded"));
    let o = sphmod(&["approx", "--example", "E5", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sphmod(&["modulus", "--example", "E2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sphmod(&["approx", "--example", "E2", "--alpha", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("admissible"));
}

#[test]
fn approx_e5_slope() {
    let o = sphmod(&["approx", "--example", "E5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert!((report["fit"]["slope"].as_f64().unwrap() + 1.5).abs() < 0.15);
}

#[test]
fn polynomial_input_is_reproduced_exactly() {
    let o = sphmod(&["approx", "--example", "E2", "--poly-degree", "6", "--reproduce"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",0e0")), "{rows:?}");
    let report: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert!(report["note"].as_str().unwrap().contains("exact reproduction"));
    assert!(report["reproduction"]["sup_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn outputs_rerun_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a/run.csv");
    let o = sphmod(&[
        "modulus",
        "--example",
        "S3",
        "--alpha",
        "0.3",
        "--tsteps",
        "9",
        "--seed",
        "7",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json = first.with_extension("json");
    assert!(json.exists());
    for (cfg, name) in [(&first, "b.csv"), (&json, "c.csv")] {
        let again = dir.path().join(name);
        let o = sphmod(&["modulus", "--config", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(fs::read(&first).unwrap(), fs::read(&again).unwrap());
        assert_eq!(fs::read(&json).unwrap(), fs::read(again.with_extension("json")).unwrap());
    }
    let o = sphmod(&["approx", "--config", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plain_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"command":"modulus","example":{"id":"S4","alpha":0.25,"y0_norm":0.5,"tsteps":9}}"#).unwrap();
    let o = sphmod(&["modulus", "--config", cfg.to_str().unwrap(), "--r", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.contains("\"y0_norm\":0.5"));
    assert!(csv.contains("\"r\":3"));
}

#[test]
fn verify_suite_exit_codes() {
    let a = sphmod(&["verify", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = sphmod(&["verify", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["report"]["passed"], serde_json::Value::Bool(true));
    let bad = sphmod(&["verify", "--tol-scale", "1e-30"]);
    assert_eq!(bad.status.code(), Some(2));
    let nonsense = sphmod(&["verify", "--tol-scale", "-1"]);
    assert_eq!(nonsense.status.code(), Some(1));
}
