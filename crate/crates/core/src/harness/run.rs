//! Run directories: resolved config, input hash, outputs and summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::Result;

/// One pass/fail line with the numbers behind it.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Human-readable measured values.
    pub detail: String,
    /// Machine-readable measured values.
    pub values: serde_json::Value,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>, values: serde_json::Value) -> Self {
        Self { name: name.into(), passed, detail: detail.into(), values }
    }
}

/// Machine-readable outcome of a verb.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub verb: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub hash: String,
    pub seed: u64,
    /// Where the run wrote its files.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl Summary {
    pub fn new(verb: &str, cfg: &RunConfig, checks: Vec<Check>) -> Self {
        Self {
            verb: verb.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            hash: input_hash(cfg, verb),
            seed: cfg.seed,
            dir: PathBuf::new(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    verb: &'a str,
    hash: &'a str,
    seed: u64,
    version: &'a str,
    files: &'a [String],
}

/// SHA-256 of the verb and the resolved configuration, ignoring settings
/// that cannot change numeric output (worker count, output location).
pub fn input_hash(cfg: &RunConfig, verb: &str) -> String {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("workers");
        obj.remove("output_dir");
    }
    let mut h = Sha256::new();
    h.update(verb.as_bytes());
    h.update([0]);
    // serde_json maps are ordered by key, so this is canonical
    h.update(serde_json::to_vec(&v).expect("value serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A directory owned by one run.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub hash: String,
    verb: String,
    seed: u64,
    files: Vec<String>,
}

impl RunDir {
    /// Create `out`, or `{output_dir}/{verb}-{hash prefix}` when `out` is
    /// `None`, and write the resolved configuration into it.
    pub fn create(cfg: &RunConfig, verb: &str, out: Option<&Path>) -> Result<Self> {
        let hash = input_hash(cfg, verb);
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => cfg.output_dir.join(format!("{verb}-{}", &hash[..12])),
        };
        fs::create_dir_all(&path)?;
        let mut dir = Self { path, hash, verb: verb.into(), seed: cfg.seed, files: Vec::new() };
        dir.write_json("config.json", cfg)?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.file(name), text)?;
        self.note(name);
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.file(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.note(name);
        Ok(())
    }

    /// Record a file written by other means.
    pub fn note(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.into());
        }
    }

    /// Write `summary.json` and `manifest.json`.
    pub fn finish(mut self, summary: &Summary) -> Result<PathBuf> {
        self.write_json("summary.json", summary)?;
        self.note("manifest.json");
        let manifest = Manifest {
            verb: &self.verb,
            hash: &self.hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.file("manifest.json"), text)?;
        Ok(self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;

    #[test]
    fn hash_ignores_workers_but_not_numerics() {
        let a = RunConfig::preset(Preset::Default);
        let mut b = a.clone();
        b.workers = Some(3);
        b.output_dir = "elsewhere".into();
        assert_eq!(input_hash(&a, "sweep"), input_hash(&b, "sweep"));
        b.seed = 2;
        assert_ne!(input_hash(&a, "sweep"), input_hash(&b, "sweep"));
        assert_ne!(input_hash(&a, "sweep"), input_hash(&a, "simulate"));
    }

    #[test]
    fn run_dir_lists_its_files() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::preset(Preset::Default);
        let mut dir = RunDir::create(&cfg, "simulate", Some(&tmp.path().join("r"))).unwrap();
        dir.write_csv("rows.csv", &[(1.0, 2.0)]).unwrap();
        let summary = Summary::new("simulate", &cfg, vec![Check::new("x", true, "", serde_json::Value::Null)]);
        let path = dir.finish(&summary).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path.join("manifest.json")).unwrap()).unwrap();
        let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(files, ["config.json", "rows.csv", "summary.json", "manifest.json"]);
        assert_eq!(manifest["hash"], input_hash(&cfg, "simulate"));
    }
}
