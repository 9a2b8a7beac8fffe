use std::fs;
use std::path::Path;

use backmap::harness::{run_counterexample, run_simulate, run_validation, RunConfig};
use backmap::lagrangian::snapshot::read_snapshot;
use backmap::lagrangian::{ReducedGrid, ReducedState};
use backmap::Error;

fn coarse(extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> = vec!["reduced.n_r=97".into(), "reduced.track_q=false".into()];
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &o).unwrap()
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect()
}

#[test]
fn sequential_reruns_reproduce_every_file() {
    let cfg = coarse(&["sweep.s_lo=2.5", "sweep.s_hi=4.5", "sweep.n_s=5", "locate.n_s=8", "locate.n_t=257"]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = pool.install(|| run_counterexample(&cfg, Some(a.path()))).unwrap();
    let rb = pool.install(|| run_counterexample(&cfg, Some(b.path()))).unwrap();
    assert_eq!(ra.summary.hash, rb.summary.hash);
    let files = manifest_files(a.path());
    for f in ["config.json", "sweep.csv", "zero.json", "curves.csv", "summary.json", "manifest.json"] {
        assert!(files.iter().any(|g| g == f), "{f} missing from {files:?}");
    }
    for f in &files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(ra.degree.map(i64::abs), Some(1));
    assert!(ra.within_tolerance);
}

#[test]
fn corrupted_snapshot_header_names_the_file() {
    let cfg = coarse(&["t_end=0.25"]);
    let dir = tempfile::tempdir().unwrap();
    run_simulate(&cfg, Some(dir.path())).unwrap();
    let path = dir.path().join("reduced_final.bin");
    let snap = read_snapshot(&path).unwrap();
    let grid = ReducedGrid::split(&cfg.profile, cfg.reduced.half_width, cfg.reduced.n_r, cfg.nu);
    let state = ReducedState::from_snapshot(&snap, grid).unwrap();
    assert!((state.time - 0.25).abs() < 1e-12);

    let mut bytes = fs::read(&path).unwrap();
    bytes[..8].copy_from_slice(b"garbage!");
    fs::write(&path, bytes).unwrap();
    let err = read_snapshot(&path).unwrap_err();
    assert!(matches!(err, Error::Snapshot { .. }));
    assert!(err.to_string().contains("reduced_final.bin"), "{err}");
}

#[test]
fn doubled_explicit_step_is_rejected_before_stepping() {
    let base = RunConfig::load(None, &["solver=\"3d\"".into(), "grid.n=33".into()]).unwrap();
    let stable = base.grid_spec().stable_dt(&base.profile);
    let err = RunConfig::load(None, &["solver=\"3d\"".into(), "grid.n=33".into(), format!("grid.dt={}", 2.0 * stable)])
        .unwrap_err();
    assert!(matches!(err, Error::Stability { .. }), "{err}");
}

#[test]
fn fast_checks_pass_and_are_recorded() {
    let cfg = RunConfig::load(None, &["validation.checks=[1, 9, 10]".into()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_validation(&cfg, Some(dir.path())).unwrap();
    assert!(summary.passed, "{:#?}", summary.checks);
    assert_eq!(summary.checks.len(), 3);
    let recorded: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(recorded.as_array().unwrap().len(), 3);
}
