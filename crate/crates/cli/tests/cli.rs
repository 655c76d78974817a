use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn robreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robreg")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(robreg(&["bogus"]).status.code(), Some(1));
    assert_eq!(robreg(&["--help"]).status.code(), Some(0));
    assert_eq!(robreg(&["lb", "--kind", "nope", "--eps", "0.1"]).status.code(), Some(2));
}

#[test]
fn lb_dependent_report() {
    let v = json(&robreg(&["lb", "--kind", "dependent", "--eps", "0.04", "--mc-samples", "20000"]));
    assert_eq!(v["tv"].as_f64().unwrap(), 0.04);
    let theta2 = v["theta2"][1].as_f64().unwrap();
    let oracle = (0.96 / 3.0) / (0.96 / 3.0 + 0.2);
    assert!((theta2 - oracle).abs() < 1e-9, "{theta2}");
    assert_eq!(v["claimed"]["theta2"]["formula"], "(1−ε)/(1+√ε)");
    assert_eq!(v["claimed"]["theta2"]["value"].as_f64().unwrap(), 0.8);
    assert_eq!(v["identifiability"].as_array().unwrap().len(), 2);
}

#[test]
fn gen_contaminate_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.csv");
    let bad = dir.path().join("bad.csv");
    let out = robreg(&["gen", "--d", "2", "--n", "400", "--theta", "1,-1", "--seed", "3", "--out", path(&clean)]);
    assert!(out.status.success());
    let out = robreg(&[
        "contaminate", "--input", path(&clean), "--eps", "0.1", "--magnitude", "20", "--slope", "1", "--seed", "3",
        "--out", path(&bad),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("replaced 40 of 400"));

    let err = |v: &Value| {
        let t: Vec<f64> = v["theta_hat"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        ((t[0] - 1.0).powi(2) + (t[1] + 1.0).powi(2)).sqrt()
    };
    let clean_ols = json(&robreg(&["estimate", "--input", path(&clean), "--method", "ols"]));
    let bad_ols = json(&robreg(&["estimate", "--input", path(&bad), "--method", "ols"]));
    let bad_rgd = json(&robreg(&[
        "estimate", "--input", path(&bad), "--method", "rgd", "--eps", "0.1", "--mean", "trimmed",
    ]));
    assert!(err(&clean_ols) < 0.3);
    assert!(err(&bad_ols) > 1.5);
    assert!(err(&bad_rgd) < err(&bad_ols) / 3.0);
    assert_eq!(bad_rgd["method"], "rgd");
}

#[test]
fn estimate_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let report = dir.path().join("r.json");
    assert!(robreg(&["gen", "--n", "50", "--out", path(&data)]).status.success());
    let out = robreg(&["estimate", "--input", path(&data), "--method", "gd", "--out", path(&report)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["method"], "gd");
}

#[test]
fn sos_memory_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(robreg(&["gen", "--d", "10", "--n", "40", "--out", path(&data)]).status.success());
    let out = robreg(&[
        "estimate", "--input", path(&data), "--method", "sos", "--eps", "0.1", "--memory-budget", "1000",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("memory"));
}

#[test]
fn unknown_method_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(robreg(&["gen", "--n", "10", "--out", path(&data)]).status.success());
    let out = robreg(&["estimate", "--input", path(&data), "--method", "magic"]);
    assert_eq!(out.status.code(), Some(2));
}

const CONFIG: &str = "
instance.d = 2
instance.noise = uniform
adversary.strategy = leverage_plant
adversary.magnitude = 5
estimators.list = ols, rgd
rgd.method = trimmed
sweep.eps = 0.02, 0.04, 0.08
sweep.reps = 3
sweep.n = 300
sweep.seed = 5
";

#[test]
fn sweep_is_reproducible_and_slopes_read_it_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        let out = robreg(&["sweep", "--config", path(&cfg), "--out", path(o)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["results.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let results = a.join("results.csv");
    assert_eq!(std::fs::read_to_string(&results).unwrap().lines().count(), 1 + 3 * 3 * 2);

    let v = json(&robreg(&["slopes", "--input", path(&results)]));
    let fits = v.as_array().unwrap();
    assert_eq!(fits.len(), 2);
    assert!(fits.iter().all(|f| f["slope"].is_number()), "{v}");
    let one = json(&robreg(&["slopes", "--input", path(&results), "--estimator", "rgd"]));
    assert_eq!(one.as_array().unwrap().len(), 1);
}

#[test]
fn sweep_without_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    assert_eq!(robreg(&["sweep", "--config", path(&cfg)]).status.code(), Some(2));
}
