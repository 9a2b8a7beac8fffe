//! Run configuration: presets, JSON documents and dotted overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::flow::BumpProfile;
use crate::homotopy::LocateOptions;
use crate::lagrangian::{GridSpec, ReducedGrid};
use crate::stochastic::{Blob, BoxGrid, StencilOrder};

/// Named starting points for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Shells of thickness 0.25, `s = π`, `ν = 10⁻²`.
    Default,
    /// Shells of thickness 0.1, otherwise as `default`.
    Thin,
    /// `default` with `ν = 0`.
    Inviscid,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::Default),
            "thin" => Ok(Self::Thin),
            "inviscid" => Ok(Self::Inviscid),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected default, thin or inviscid)"))),
        }
    }
}

/// Which discretization `simulate` drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[serde(rename = "3d")]
    Cartesian,
    Reduced,
    Both,
}

/// 3D grid. `half_width` and `dt` default to `4 max(R_o, Z_o)` and the
/// stability limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: Option<f64>,
    pub dt: Option<f64>,
    /// Co-integrate `Q`.
    pub track_q: bool,
    pub q_cap: f64,
}

/// Axisymmetric grid on `[0, L] × [−L, L]` with `2 n_r − 1` axial nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedConfig {
    pub n_r: usize,
    pub half_width: f64,
    /// `None` means `t0/200`.
    pub dt: Option<f64>,
    pub track_q: bool,
    pub q_cap: f64,
    /// `Q` step after the spin-up.
    pub late_dt: f64,
}

/// Sampling of `F(t, s)` and the viscosity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub s_lo: f64,
    pub s_hi: f64,
    pub n_s: usize,
    /// Explicit angles; replaces the `(s_lo, s_hi, n_s)` grid for the table.
    pub s_list: Option<Vec<f64>>,
    /// Time samples per angle in the emitted table.
    pub csv_n_t: usize,
    /// `‖∇A(0, T) − I‖ ≤ threshold` fixes the far edge `T`.
    pub threshold: f64,
    /// Give up looking for `T` beyond this time.
    pub t_max: f64,
    /// Viscosities of the convergence table; empty to skip it.
    pub nus: Vec<f64>,
}

/// Zero search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocateConfig {
    pub tol_f: f64,
    pub tol_param: f64,
    pub retries: usize,
    pub max_depth: usize,
    /// Boundary samples per `s`-edge.
    pub n_t: usize,
    /// Boundary samples per `t`-edge.
    pub n_s: usize,
}

impl LocateConfig {
    pub fn options(&self) -> LocateOptions {
        LocateOptions { tol_f: self.tol_f, tol_param: self.tol_param, retries: self.retries, max_depth: self.max_depth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatKernelConfig {
    /// Times after `t0` at which the solver and the kernel are compared.
    pub taus: Vec<f64>,
    /// Nodes per axis of the 3D quadrature of the lifted snapshot.
    pub quad_n: usize,
}

/// Grid of the deterministic magnetization oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    pub n: usize,
    pub half_width: f64,
    pub order: StencilOrder,
}

impl OracleConfig {
    pub fn grid(&self) -> BoxGrid {
        BoxGrid::bounded(self.half_width, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticConfig {
    pub n_paths: usize,
    /// `None` means `t/512`.
    pub dt: Option<f64>,
    pub antithetic: bool,
    /// `None` means `√(2ν)`.
    pub sigma: Option<f64>,
    /// Evaluation time; `None` means `t0/2`.
    pub time: Option<f64>,
    pub probes: Vec<[f64; 3]>,
    /// Initial magnetization.
    pub blob: Blob,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Acceptance checks to run, numbered 1 to 10.
    pub checks: Vec<u32>,
}

/// Everything a run needs. Unknown keys are rejected at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub profile: BumpProfile,
    pub nu: f64,
    pub solver: SolverKind,
    pub t_end: f64,
    pub grid: GridConfig,
    pub reduced: ReducedConfig,
    pub sweep: SweepConfig,
    pub locate: LocateConfig,
    pub heatkernel: HeatKernelConfig,
    pub stochastic: StochasticConfig,
    pub validation: ValidationConfig,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    /// Parent of generated run directories when no explicit one is given.
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let shell = if preset == Preset::Thin { 0.1 } else { 0.25 };
        let nu = if preset == Preset::Inviscid { 0.0 } else { 1e-2 };
        let profile = BumpProfile::with_shell(shell, PI);
        Self {
            preset,
            profile,
            nu,
            solver: SolverKind::Reduced,
            t_end: 2.0,
            grid: GridConfig { n: 97, half_width: None, dt: None, track_q: false, q_cap: 1e8 },
            reduced: ReducedConfig {
                n_r: 257,
                half_width: 2.0 * (1.0 + shell),
                dt: None,
                track_q: true,
                q_cap: 1e8,
                late_dt: 0.05,
            },
            sweep: SweepConfig {
                s_lo: 0.0,
                s_hi: 2.0 * PI,
                n_s: 17,
                s_list: None,
                csv_n_t: 200,
                threshold: 0.1,
                t_max: 2000.0,
                nus: vec![4e-3, 2e-3, 1e-3],
            },
            locate: LocateConfig { tol_f: 1e-3, tol_param: 1e-6, retries: 2, max_depth: 60, n_t: 513, n_s: 9 },
            heatkernel: HeatKernelConfig { taus: vec![0.25, 0.5, 1.0, 2.0, 3.0], quad_n: 121 },
            stochastic: StochasticConfig {
                n_paths: 10_000,
                dt: None,
                antithetic: true,
                sigma: None,
                time: None,
                probes: vec![
                    [0.3, 0.2, 0.1],
                    [-0.5, 0.4, 0.6],
                    [0.2, -0.6, -0.5],
                    [1.6, 0.1, 0.2],
                    [0.3, 0.2, 1.45],
                ],
                blob: Blob { center: [0.4, 0.1, 0.0], radius: 1.6, amplitude: [1.0, 0.5, 0.3], twist: 0.8 },
                oracle: OracleConfig { enabled: true, n: 121, half_width: 2.5, order: StencilOrder::Fourth },
            },
            validation: ValidationConfig { checks: (1..=10).collect() },
            seed: 1,
            workers: None,
            output_dir: PathBuf::from("runs"),
        }
    }

    /// Resolve a configuration: preset, then the JSON document at `path`,
    /// then each `key=value` override (dotted paths; values are JSON, or a
    /// plain string when they do not parse). The preset is taken from a
    /// `preset=` override, else from the document, else `default`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{} is not valid JSON: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(Error::Config(format!("{} must hold a JSON object", p.display())));
                }
                v
            }
            None => Value::Object(Map::new()),
        };
        let parsed: Vec<(String, Value)> = overrides.iter().map(|o| parse_override(o)).collect::<Result<_>>()?;
        let preset_name = parsed
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
            .or_else(|| doc.get("preset").cloned())
            .unwrap_or(Value::String("default".into()));
        let preset = match preset_name {
            Value::String(s) => Preset::parse(&s)?,
            other => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut value = serde_json::to_value(Self::preset(preset))?;
        merge(&mut value, doc);
        for (key, v) in parsed {
            set_path(&mut value, &key, v)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-check every module invariant the configuration touches.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Stability { .. } | Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.profile.validate().map_err(cfg_err)?;
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("viscosity must be finite and non-negative, got {}", self.nu)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        self.grid_spec().validate(&self.profile).map_err(cfg_err)?;
        self.reduced_grid().validate(&self.profile).map_err(cfg_err)?;
        let sw = &self.sweep;
        let in_range = |s: f64| (0.0..=2.0 * PI).contains(&s);
        if !(in_range(sw.s_lo) && in_range(sw.s_hi) && sw.s_lo <= sw.s_hi) {
            return Err(Error::Config(format!("sweep needs 0 ≤ s_lo ≤ s_hi ≤ 2π, got [{}, {}]", sw.s_lo, sw.s_hi)));
        }
        if sw.n_s < 2 || sw.csv_n_t < 2 {
            return Err(Error::Config("sweep needs at least 2 angles and 2 times".into()));
        }
        if let Some(list) = &sw.s_list {
            if list.is_empty() || !list.iter().all(|&s| in_range(s)) {
                return Err(Error::Config("s_list must be non-empty with entries in [0, 2π]".into()));
            }
        }
        if !(sw.threshold > 0.0 && sw.threshold < 1.0) || !(sw.t_max > self.profile.t0) {
            return Err(Error::Config("sweep needs 0 < threshold < 1 and t_max > t0".into()));
        }
        if sw.nus.iter().any(|&nu| !(nu > 0.0)) {
            return Err(Error::Config("sweep viscosities must be positive".into()));
        }
        let lc = &self.locate;
        if lc.n_t < 8 || lc.n_s < 8 || !(lc.tol_f > 0.0) || !(lc.tol_param > 0.0) {
            return Err(Error::Config("locate needs n_t, n_s ≥ 8 and positive tolerances".into()));
        }
        if self.heatkernel.taus.iter().any(|&t| !(t > 0.0)) || self.heatkernel.quad_n < 3 {
            return Err(Error::Config("heat-kernel times must be positive and quad_n ≥ 3".into()));
        }
        let st = &self.stochastic;
        if st.n_paths < 2 || (st.antithetic && st.n_paths % 2 != 0) {
            return Err(Error::Config(format!("path count {} must be ≥ 2 (and even when antithetic)", st.n_paths)));
        }
        if st.dt.is_some_and(|dt| !(dt > 0.0)) || st.sigma.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::Config("stochastic dt must be positive and sigma non-negative".into()));
        }
        if st.time.is_some_and(|t| !(t >= 0.0)) || !(st.blob.radius > 0.0) {
            return Err(Error::Config("stochastic time must be non-negative and the blob radius positive".into()));
        }
        if st.oracle.enabled {
            st.oracle.grid().validate().map_err(cfg_err)?;
        }
        if let Some(bad) = self.validation.checks.iter().find(|&&c| !(1..=10).contains(&c)) {
            return Err(Error::Config(format!("unknown validation check {bad}; checks are numbered 1 to 10")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The 3D grid described by `grid`.
    pub fn grid_spec(&self) -> GridSpec {
        let mut g = match self.grid.half_width {
            Some(l) => GridSpec::with_half_width(&self.profile, l, self.grid.n, self.nu),
            None => GridSpec::for_profile(&self.profile, self.grid.n, self.nu),
        };
        if let Some(dt) = self.grid.dt {
            g.dt = dt;
        }
        g
    }

    /// The reduced grid described by `reduced`.
    pub fn reduced_grid(&self) -> ReducedGrid {
        self.reduced_grid_for(self.nu)
    }

    pub fn reduced_grid_for(&self, nu: f64) -> ReducedGrid {
        let mut g = ReducedGrid::split(&self.profile, self.reduced.half_width, self.reduced.n_r, nu);
        if let Some(dt) = self.reduced.dt {
            g.dt = dt;
        }
        g
    }

    /// Angles of the emitted `F(t, s)` table.
    pub fn sweep_angles(&self) -> Vec<f64> {
        match &self.sweep.s_list {
            Some(list) => list.clone(),
            None => {
                let n = self.sweep.n_s;
                (0..n).map(|i| self.sweep.s_lo + (self.sweep.s_hi - self.sweep.s_lo) * i as f64 / (n - 1) as f64).collect()
            }
        }
    }

    pub fn stochastic_time(&self) -> f64 {
        self.stochastic.time.unwrap_or(0.5 * self.profile.t0)
    }
}

fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, val) =
        raw.split_once('=').ok_or_else(|| Error::Config(format!("override {raw:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override {raw:?} has an empty key segment")));
    }
    let value = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.to_string(), value))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("cannot set {key}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        // optional sections start out as null
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Default, Preset::Thin, Preset::Inviscid] {
            RunConfig::preset(p).validate().unwrap();
        }
        assert_eq!(RunConfig::preset(Preset::Thin).profile.r_outer, 1.1);
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let cfg = RunConfig::load(None, &["profile.s=1.5".into(), "sweep.nus=[]".into(), "preset=thin".into()]).unwrap();
        assert_eq!(cfg.profile.s, 1.5);
        assert_eq!(cfg.profile.r_outer, 1.1);
        assert!(cfg.sweep.nus.is_empty());
        let cfg = RunConfig::load(None, &["stochastic.dt=0.01".into()]).unwrap();
        assert_eq!(cfg.stochastic.dt, Some(0.01));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for o in ["profile.colour=1", "nu=-1", "nope", "locate.n_s=3", "preset=huge", "validation.checks=[11]"] {
            let e = RunConfig::load(None, &[o.to_string()]).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{o}: {e}");
        }
    }

    #[test]
    fn unstable_explicit_step_is_rejected_at_load() {
        let base = RunConfig::preset(Preset::Default).grid_spec();
        let e = RunConfig::load(None, &[format!("grid.dt={}", 2.0 * base.dt * 1.01)]).unwrap_err();
        assert!(matches!(e, Error::Stability { .. }), "{e}");
    }

    #[test]
    fn documents_merge_under_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"nu": 0.02, "profile": {"s": 2.0}, "reduced": {"n_r": 129}}"#).unwrap();
        let cfg = RunConfig::load(Some(&path), &["nu=0.03".into()]).unwrap();
        assert_eq!((cfg.nu, cfg.profile.s, cfg.reduced.n_r), (0.03, 2.0, 129));
        assert_eq!(cfg.profile.r_outer, 1.25);
        std::fs::write(&path, "{").unwrap();
        let e = RunConfig::load(Some(&path), &[]).unwrap_err();
        assert!(e.to_string().contains("c.json"));
    }
}
