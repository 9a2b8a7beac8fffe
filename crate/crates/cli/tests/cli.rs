use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn backmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backmap")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn coarse<'a>(out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--out", out.to_str().unwrap(), "--set", "reduced.n_r=97", "--set", "reduced.track_q=false"];
    v.extend_from_slice(extra);
    v
}

#[test]
fn inviscid_counterexample_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = backmap(&["counterexample", "--set", "preset=\"inviscid\"", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("inviscid flow never forgets"));
}

#[test]
fn unknown_keys_and_unstable_steps_exit_with_3() {
    let o = backmap(&["simulate", "--set", "grid.bogus=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
    let o = backmap(&["simulate", "--set", "solver=\"3d\"", "--set", "grid.n=17", "--set", "grid.dt=1.0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stab"), "{}", stderr(&o));
    let o = backmap(&["simulate", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_3() {
    assert_eq!(backmap(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(backmap(&["--help"]).status.code(), Some(0));
}

#[test]
fn short_angle_range_has_degree_zero_and_keeps_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let args = coarse(dir.path(), &["--set", "sweep.s_hi=0.39269908169872414", "--set", "sweep.n_s=3", "counterexample"]);
    let o = backmap(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL boundary degree"));
    assert!(dir.path().join("sweep.csv").exists());
    assert!(!dir.path().join("zero.json").exists());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
    assert_eq!(summary["checks"][0]["values"]["degree"], 0);
}

#[test]
fn coarse_counterexample_finds_the_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = backmap(&coarse(dir.path(), &["counterexample"]));
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let zero: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("zero.json")).unwrap()).unwrap();
    let s = zero["s_star"].as_f64().unwrap();
    assert!(zero["F_norm"].as_f64().unwrap() <= 1e-3);
    assert!(s > 0.0 && s < std::f64::consts::TAU);
    assert!(zero["t_star"].as_f64().unwrap() > 1.0);
    assert_eq!(zero["degree"].as_i64().unwrap().abs(), 1);
}

#[test]
fn simulate_reruns_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        let o = backmap(&coarse(d, &["--set", "t_end=0.5", "--workers", "1", "--seed", "7", "simulate"]));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    for name in manifest["files"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let config = fs::read_to_string(a.path().join("config.json")).unwrap();
    assert!(config.contains("\"n_r\": 97"));
}
