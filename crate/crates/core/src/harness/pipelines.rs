//! The experiment pipelines behind the command-line verbs.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, SolverKind};
use super::run::{Check, RunDir, Summary};
use crate::error::{Error, Result};
use crate::flow::BumpProfile;
use crate::homotopy::{boundary_degree, locate_zero, HomotopyField, LocatedZero, ParameterRectangle};
use crate::jacobian::{
    decompose_at, decompose_complex, heat_tail_from_sampler, reduced_heat_tail, region_integrals, JacobianRow,
    LiftedGradient,
};
use crate::lagrangian::reduced::euler_discrepancy;
use crate::lagrangian::snapshot::write_snapshot;
use crate::lagrangian::{c_at_origin, gradient_at_origin, CartesianSolver, ReducedGrid, ReducedSolver, ReducedState};
use crate::linalg::{block_from_complex, max_entry, spectral_norm, Mat3, Vec3};
use crate::stochastic::{
    mc_magnetization, solve_m_deterministic, ClebschData, MSolveSpec, MagnetizationField, McEstimate, McOptions,
};

/// Why the counterexample cannot be run without viscosity.
pub const INVISCID_DIAGNOSTIC: &str = "inviscid flow never forgets: with ν = 0 the Jacobian at the origin keeps \
     the rotation by −s after the spin-up, so F(T, s) = (cos s, −sin s) never returns to (1, 0) and the far edge \
     of the homotopy cannot be made constant; set nu > 0";

/// Convention recorded with every zero.
pub const SIGN_CONVENTION: &str = "F = (Re c, Im c) with c = ∂w/∂r(0, t), i.e. the first column of the \
     horizontal block of ∇A(0, t); the rectangle boundary runs counterclockwise with t horizontal and s vertical";

/// One angle's worth of `c(t) = ∂w/∂r(0, t)`: solver values up to the
/// hand-off time, the heat-kernel representation of the `t0` state after it.
struct Column {
    early: Vec<(f64, Complex64)>,
    handoff: f64,
    at_t0: ReducedState,
    nu: f64,
}

impl Column {
    fn at(&self, t: f64) -> Result<Complex64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("F is defined for t ≥ 0, got {t}")));
        }
        if t > self.handoff {
            return reduced_heat_tail(&self.at_t0, self.nu, t - self.at_t0.time);
        }
        let k = self.early.partition_point(|(tt, _)| *tt < t);
        if k == 0 {
            return Ok(self.early[0].1);
        }
        let Some(&(t2, c2)) = self.early.get(k) else {
            return Ok(self.early[k - 1].1);
        };
        let (t1, c1) = self.early[k - 1];
        let w = if t2 > t1 { (t - t1) / (t2 - t1) } else { 1.0 };
        Ok(c1 + (c2 - c1) * w)
    }
}

/// `F(t, s) = (Re c, Im c)` from reduced runs, one per distinct angle, cached.
///
/// Each run stops shortly after `t0`, once the heat kernel is resolved by
/// the grid (`√(2ντ) ≥ 4 h`); later times use the heat-kernel
/// representation of the `t0` state.
pub struct OriginField {
    profile: BumpProfile,
    grid: ReducedGrid,
    cache: Mutex<HashMap<u64, Arc<Column>>>,
    runs: AtomicUsize,
}

impl OriginField {
    pub fn new(profile: BumpProfile, grid: ReducedGrid) -> Result<Self> {
        if grid.nu == 0.0 {
            return Err(Error::Config(INVISCID_DIAGNOSTIC.into()));
        }
        grid.validate(&profile)?;
        Ok(Self { profile, grid, cache: Mutex::new(HashMap::new()), runs: AtomicUsize::new(0) })
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    pub fn grid(&self) -> &ReducedGrid {
        &self.grid
    }

    /// Time after which values come from the heat kernel.
    pub fn handoff(&self) -> f64 {
        let h = self.grid.h_r().max(self.grid.h_z());
        self.profile.t0 + 8.0 * h * h / self.grid.nu
    }

    /// Solver runs performed so far.
    pub fn solver_runs(&self) -> usize {
        self.runs.load(Ordering::Relaxed)
    }

    fn column_data(&self, s: f64) -> Result<Arc<Column>> {
        if let Some(c) = self.cache.lock().expect("cache lock").get(&s.to_bits()) {
            return Ok(c.clone());
        }
        let p = self.profile.with_s(s);
        p.validate()?;
        let mut solver = ReducedSolver::new(p, self.grid)?;
        let mut early = vec![(0.0, Complex64::new(1.0, 0.0))];
        let mut failure = None;
        let mut record = |sv: &ReducedSolver| match c_at_origin(sv.state()) {
            Ok(c) => early.push((sv.time(), c)),
            Err(e) => failure = failure.take().or(Some(e)),
        };
        solver.advance_with(p.t0, &mut record)?;
        let at_t0 = solver.state().clone();
        solver.advance_with(self.handoff(), &mut record)?;
        if let Some(e) = failure {
            return Err(e);
        }
        let col = Arc::new(Column { early, handoff: self.handoff(), at_t0, nu: self.grid.nu });
        self.runs.fetch_add(1, Ordering::Relaxed);
        self.cache.lock().expect("cache lock").insert(s.to_bits(), col.clone());
        Ok(col)
    }

    /// `c(t)` for rotation angle `s`.
    pub fn c(&self, t: f64, s: f64) -> Result<Complex64> {
        self.column_data(s)?.at(t)
    }

    /// Reduced state at `t0` for angle `s`.
    pub fn state_at_t0(&self, s: f64) -> Result<ReducedState> {
        Ok(self.column_data(s)?.at_t0.clone())
    }
}

impl HomotopyField for OriginField {
    fn column(&self, s: f64, ts: &[f64]) -> Result<Vec<[f64; 2]>> {
        let col = self.column_data(s)?;
        ts.iter().map(|&t| col.at(t).map(|c| [c.re, c.im])).collect()
    }
}

/// Max-entry distance of `∇A(0, t)` from the identity.
fn distance_from_identity(c: Complex64) -> f64 {
    (c.re - 1.0).abs().max(c.im.abs())
}

/// Smallest `T > t0` with `‖∇A(0, t) − I‖ ≤ threshold` from `T` on, for each
/// angle; the far edge is the largest of them. The decay is monotone once the
/// kernel is wider than the swirl region, so a geometric scan followed by
/// bisection suffices.
pub fn far_edge(field: &OriginField, angles: &[f64], threshold: f64, t_max: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    let t0 = field.profile().t0;
    let per_angle: Vec<(f64, f64)> = angles
        .par_iter()
        .map(|&s| {
            let dist = |t: f64| field.c(t, s).map(distance_from_identity);
            let (mut lo, mut hi) = (t0, t0);
            let mut step = 0.5 * t0;
            while dist(hi)? > threshold {
                lo = hi;
                hi += step;
                step *= 1.25;
                if hi > t_max {
                    return Err(Error::Domain(format!(
                        "‖∇A(0, t) − I‖ stays above {threshold} up to t = {t_max} for s = {s}"
                    )));
                }
            }
            if hi == t0 {
                return Ok((s, t0));
            }
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if dist(mid)? > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok((s, hi))
        })
        .collect::<Result<_>>()?;
    let t_hi = per_angle.iter().map(|p| p.1).fold(2.0 * t0, f64::max);
    Ok((t_hi, per_angle))
}

/// Row of the `F(t, s)` table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub t: f64,
    #[serde(rename = "Fx")]
    pub fx: f64,
    #[serde(rename = "Fy")]
    pub fy: f64,
    pub a: f64,
    pub b: f64,
}

fn sweep_rows(field: &OriginField, angles: &[f64], t_hi: f64, n_t: usize) -> Result<Vec<SweepRow>> {
    let ts: Vec<f64> = (0..n_t).map(|i| t_hi * i as f64 / (n_t - 1) as f64).collect();
    let cols: Vec<Vec<SweepRow>> = angles
        .par_iter()
        .map(|&s| {
            ts.iter()
                .map(|&t| {
                    let c = field.c(t, s)?;
                    let d = decompose_complex(c, t, s);
                    Ok(SweepRow { s, t, fx: c.re, fy: c.im, a: d.a, b: d.b })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(cols.into_iter().flatten().collect())
}

/// Sampled `a(t)`, `b(t)` and `Q` along the located angle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurveRow {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    /// `max |Q|` over the grid.
    pub q_sup: Option<f64>,
    /// Spectral norm of `Q(0, t)`.
    pub q_origin: Option<f64>,
    pub q_origin_times_a: Option<f64>,
    /// `solver` while `Q` is co-integrated, `kernel` afterwards.
    pub source: &'static str,
}

/// How `Q(0, t)` behaves on the approach `t0 ≤ t ≤ t*` to the zero.
#[derive(Debug, Clone, Serialize)]
pub struct QApproach {
    /// Last time with admissible `Q`, if the co-integration blew up.
    pub blowup_time: Option<f64>,
    /// Samples of `‖Q(0, t)‖ a(t)` with `t0 ≤ t ≤ t*`.
    pub samples: usize,
    pub product_min: Option<f64>,
    pub product_max: Option<f64>,
    /// Why the co-integration could not start, if it did not.
    pub error: Option<String>,
}

impl QApproach {
    /// `‖Q(0, t)‖ a(t) ∈ [lo, hi]` at every approach sample (and there is one).
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.samples > 0 && self.product_min.is_some_and(|m| m >= lo) && self.product_max.is_some_and(|m| m <= hi)
    }
}

fn q_curves(cfg: &RunConfig, field: &OriginField, s: f64, t_star: f64) -> Result<(Vec<CurveRow>, QApproach)> {
    let p = field.profile().with_s(s);
    let t0 = p.t0;
    let mut rows = Vec::new();
    let mut approach = Vec::new();
    let mut q_state = QApproach { blowup_time: None, samples: 0, product_min: None, product_max: None, error: None };
    let mut reached = 0.0;
    match ReducedSolver::with_q(p, *field.grid(), cfg.reduced.q_cap, cfg.reduced.late_dt) {
        Ok(mut solver) => {
            let mut failure = None;
            let mut record = |sv: &ReducedSolver| {
                let t = sv.time();
                let (Some(q0), Some(&(_, sup))) = (sv.q_origin(), sv.report().q_sup.last()) else { return };
                match c_at_origin(sv.state()) {
                    Ok(c) => {
                        let d = decompose_complex(c, t, s);
                        let qn = spectral_norm(&q0);
                        if !(sup.is_finite() && sup <= cfg.reduced.q_cap) {
                            return;
                        }
                        rows.push(CurveRow {
                            t,
                            a: d.a,
                            b: d.b,
                            q_sup: Some(sup),
                            q_origin: Some(qn),
                            q_origin_times_a: Some(qn * d.a),
                            source: "solver",
                        });
                        if t >= t0 {
                            approach.push(qn * d.a);
                        }
                    }
                    Err(e) => failure = failure.take().or(Some(e)),
                }
            };
            solver.advance_with(t0.min(t_star), &mut record)?;
            // nothing more to learn once Q has left the admissible range
            if solver.report().blowup_time.is_none() {
                solver.advance_with(t_star, &mut record)?;
            }
            if let Some(e) = failure {
                return Err(e);
            }
            q_state.blowup_time = solver.report().blowup_time;
            reached = q_state.blowup_time.unwrap_or(solver.time());
        }
        Err(e) => q_state.error = Some(e.to_string()),
    }
    // the rest of the approach from the map alone
    let n = 200;
    for k in 0..=n {
        let t = t_star * k as f64 / n as f64;
        if t <= reached {
            continue;
        }
        let d = decompose_complex(field.c(t, s)?, t, s);
        rows.push(CurveRow { t, a: d.a, b: d.b, q_sup: None, q_origin: None, q_origin_times_a: None, source: "kernel" });
    }
    q_state.samples = approach.len();
    q_state.product_min = approach.iter().copied().reduce(f64::min);
    q_state.product_max = approach.iter().copied().reduce(f64::max);
    Ok((rows, q_state))
}

/// Record of the located zero, written as `zero.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroRecord {
    pub s_star: f64,
    pub t_star: f64,
    #[serde(rename = "F_norm")]
    pub f_norm: f64,
    pub degree: i64,
    pub depth: usize,
    pub rect: ParameterRectangle,
    pub t_hi: f64,
    pub within_tolerance: bool,
    pub nu: f64,
    pub reduced_grid: ReducedGrid,
    pub solver_runs: usize,
    pub seed: u64,
    pub grid_hash: String,
    pub sign_convention: &'static str,
    pub q: QApproach,
}

/// Outcome of [`run_counterexample`].
#[derive(Debug, Clone)]
pub struct ZeroReport {
    /// `None` when the boundary could not carry a winding number.
    pub degree: Option<i64>,
    pub t_hi: f64,
    pub zero: Option<LocatedZero>,
    pub within_tolerance: bool,
    pub q: Option<QApproach>,
    pub solver_runs: usize,
    pub summary: Summary,
}

/// Sweep over `s`, compute the boundary degree of `F` on `[0, T] × [s_lo, s_hi]`
/// with `T` from the threshold rule, locate the zero, and record `a`, `b` and
/// `Q` along it. Passes iff `|degree| = 1` and the zero satisfies
/// `|F| ≤ tol_f`, `0 < s* < 2π`, `t* > t0`. A zero degree is a failed run
/// whose sweep data are still written.
pub fn run_counterexample(cfg: &RunConfig, out: Option<&Path>) -> Result<ZeroReport> {
    if cfg.nu == 0.0 {
        return Err(Error::Config(INVISCID_DIAGNOSTIC.into()));
    }
    let field = OriginField::new(cfg.profile, cfg.reduced_grid())?;
    let mut dir = RunDir::create(cfg, "counterexample", out)?;
    let sw = &cfg.sweep;
    let mut angles = cfg.sweep_angles();
    angles.extend([sw.s_lo, sw.s_hi]);
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let (t_hi, per_angle) = far_edge(&field, &angles, sw.threshold, sw.t_max)?;
    dir.write_json("far_edge.json", &json!({ "t_hi": t_hi, "threshold": sw.threshold, "per_angle": per_angle }))?;
    let table: Vec<f64> = cfg.sweep_angles();
    dir.write_csv("sweep.csv", &sweep_rows(&field, &table, t_hi, sw.csv_n_t)?)?;

    let lc = &cfg.locate;
    let rect = ParameterRectangle::new(0.0, t_hi, sw.s_lo, sw.s_hi, lc.n_t, lc.n_s)?;
    let (degree, degree_err) = match boundary_degree(&rect, &field) {
        Ok(d) => (Some(d), None),
        Err(Error::Winding(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let mut checks = vec![Check::new(
        "boundary degree is ±1",
        degree.is_some_and(|d| d.abs() == 1),
        match (&degree, &degree_err) {
            (Some(d), _) => format!("degree {d} on [0, {t_hi:.4}] × [{}, {}]", sw.s_lo, sw.s_hi),
            (None, Some(m)) => format!("boundary inadmissible: {m}"),
            _ => String::new(),
        },
        json!({ "degree": degree, "t_hi": t_hi }),
    )];

    let mut zero = None;
    let mut within = false;
    let mut q = None;
    if degree.is_some_and(|d| d != 0) {
        let z = locate_zero(&rect, &field, &lc.options())?;
        within = z.f_norm <= lc.tol_f && z.s_star > 0.0 && z.s_star < TAU && z.t_star > cfg.profile.t0;
        let (rows, approach) = q_curves(cfg, &field, z.s_star, z.t_star)?;
        dir.write_csv("curves.csv", &rows)?;
        let record = ZeroRecord {
            s_star: z.s_star,
            t_star: z.t_star,
            f_norm: z.f_norm,
            degree: z.degree,
            depth: z.depth,
            rect: z.rect,
            t_hi,
            within_tolerance: within,
            nu: cfg.nu,
            reduced_grid: *field.grid(),
            solver_runs: field.solver_runs(),
            seed: cfg.seed,
            grid_hash: dir.hash.clone(),
            sign_convention: SIGN_CONVENTION,
            q: approach.clone(),
        };
        dir.write_json("zero.json", &record)?;
        checks.push(Check::new(
            "zero located within tolerance",
            within,
            format!("s* = {:.6}, t* = {:.4}, |F| = {:.2e} after {} levels", z.s_star, z.t_star, z.f_norm, z.depth),
            json!({ "s_star": z.s_star, "t_star": z.t_star, "F_norm": z.f_norm }),
        ));
        zero = Some(z);
        q = Some(approach);
    } else {
        checks.push(Check::new(
            "zero located within tolerance",
            false,
            "skipped: the boundary degree does not force a zero",
            serde_json::Value::Null,
        ));
    }
    let mut summary = Summary::new("counterexample", cfg, checks);
    let solver_runs = field.solver_runs();
    summary.dir = dir.finish(&summary)?;
    Ok(ZeroReport { degree, t_hi, zero, within_tolerance: within, q, solver_runs, summary })
}

/// Row of the viscosity convergence table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NuRow {
    pub nu: f64,
    /// `sup_{t ≤ t0} max_x |∇(A − A^E)|`.
    pub discrepancy: f64,
    /// Ratio to the previous row.
    pub ratio: Option<f64>,
}

/// `sup_{t ≤ t0} ‖∇(A − A^E)‖∞` on the reduced grid for each viscosity.
pub fn nu_convergence(p: &BumpProfile, half_width: f64, n_r: usize, nus: &[f64]) -> Result<Vec<NuRow>> {
    let mut rows: Vec<NuRow> = Vec::new();
    for &nu in nus {
        let g = ReducedGrid::split(p, half_width, n_r, nu);
        let mut solver = ReducedSolver::new(*p, g)?;
        let mut worst = 0.0_f64;
        let mut k = 0usize;
        solver.advance_with(p.t0, |sv| {
            k += 1;
            if k % 5 == 0 || sv.time() >= p.t0 - 1e-12 {
                worst = worst.max(euler_discrepancy(sv.state(), p));
            }
        })?;
        let ratio = rows.last().map(|r| worst / r.discrepancy);
        rows.push(NuRow { nu, discrepancy: worst, ratio });
    }
    Ok(rows)
}

/// The `F(t, s)` table over the configured angles, its boundary degree, and
/// the viscosity convergence table.
pub fn run_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<Summary> {
    if cfg.nu == 0.0 {
        return Err(Error::Config(INVISCID_DIAGNOSTIC.into()));
    }
    let field = OriginField::new(cfg.profile, cfg.reduced_grid())?;
    let mut dir = RunDir::create(cfg, "sweep", out)?;
    let sw = &cfg.sweep;
    let angles = cfg.sweep_angles();
    let (t_hi, _) = far_edge(&field, &angles, sw.threshold, sw.t_max)?;
    dir.write_csv("sweep.csv", &sweep_rows(&field, &angles, t_hi, sw.csv_n_t)?)?;
    let (s_lo, s_hi) = angles.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let rect = ParameterRectangle::new(0.0, t_hi, s_lo, s_hi, cfg.locate.n_t, cfg.locate.n_s)?;
    let degree = boundary_degree(&rect, &field);
    let mut checks = vec![Check::new(
        "boundary admits a winding number",
        degree.is_ok(),
        match &degree {
            Ok(d) => format!("degree {d} on [0, {t_hi:.4}] × [{s_lo}, {s_hi}]"),
            Err(e) => e.to_string(),
        },
        json!({ "degree": degree.as_ref().ok(), "t_hi": t_hi }),
    )];
    if !sw.nus.is_empty() {
        let rows = nu_convergence(&cfg.profile, cfg.reduced.half_width, cfg.reduced.n_r, &sw.nus)?;
        dir.write_csv("nu_sweep.csv", &rows)?;
        checks.push(Check::new(
            "viscosity table computed",
            rows.iter().all(|r| r.discrepancy.is_finite()),
            rows.iter().map(|r| format!("ν = {:e}: {:.4e}", r.nu, r.discrepancy)).collect::<Vec<_>>().join(", "),
            serde_json::to_value(&rows)?,
        ));
    }
    let mut summary = Summary::new("sweep", cfg, checks);
    summary.dir = dir.finish(&summary)?;
    Ok(summary)
}

/// `Q` history row.
#[derive(Debug, Clone, Copy, Serialize)]
struct QRow {
    t: f64,
    q_sup: f64,
    q_origin: f64,
}

/// Integrate the configured solver(s) to `t_end`, writing origin diagnostics,
/// `Q` histories and final snapshots.
pub fn run_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<Summary> {
    let mut dir = RunDir::create(cfg, "simulate", out)?;
    let p = cfg.profile;
    let mut checks = Vec::new();
    let samples = 40;
    if matches!(cfg.solver, SolverKind::Reduced | SolverKind::Both) {
        let grid = cfg.reduced_grid();
        let mut solver = ReducedSolver::new(p, grid)?;
        let mut rows = Vec::new();
        for k in 1..=samples {
            solver.advance_to(cfg.t_end * k as f64 / samples as f64)?;
            let d = decompose_complex(c_at_origin(solver.state())?, solver.time(), p.s);
            rows.push(JacobianRow::new(&d, None));
        }
        dir.write_csv("origin_reduced.csv", &rows)?;
        write_snapshot(&dir.file("reduced_final.bin"), &solver.state().to_snapshot(&dir.hash))?;
        dir.note("reduced_final.bin");
        let boundary = solver.report().boundary_max;
        checks.push(Check::new(
            "reduced boundary monitor below 1e-6",
            boundary < 1e-6,
            format!("max |D| next to the boundary {boundary:.2e}"),
            json!({ "boundary_max": boundary }),
        ));
        if cfg.reduced.track_q {
            let mut qs = ReducedSolver::with_q(p, grid, cfg.reduced.q_cap, cfg.reduced.late_dt)?;
            qs.advance_to(cfg.t_end)?;
            let rep = qs.report();
            let rows: Vec<QRow> = rep
                .q_sup
                .iter()
                .zip(&rep.q_origin)
                .map(|(&(t, q_sup), (_, q0))| QRow { t, q_sup, q_origin: spectral_norm(&Mat3::from_row_slice(q0)) })
                .collect();
            dir.write_csv("q_reduced.csv", &rows)?;
            dir.write_json("q_reduced.json", &json!({ "blowup_time": rep.blowup_time, "q_cap": cfg.reduced.q_cap }))?;
        }
    }
    if matches!(cfg.solver, SolverKind::Cartesian | SolverKind::Both) {
        let grid = cfg.grid_spec();
        let mut solver = if cfg.grid.track_q {
            CartesianSolver::with_q(p, grid, cfg.grid.q_cap)?
        } else {
            CartesianSolver::new(p, grid)?
        };
        let mut rows = Vec::new();
        for k in 1..=samples {
            let outcome = solver.advance_to(cfg.t_end * k as f64 / samples as f64)?;
            let t = solver.time();
            rows.push(JacobianRow::new(&decompose_at(&gradient_at_origin(solver.displacement())?, t, p.s), None));
            if !matches!(outcome, crate::lagrangian::StepOutcome::Reached) {
                break;
            }
        }
        dir.write_csv("origin_3d.csv", &rows)?;
        write_snapshot(&dir.file("d_final.bin"), &solver.displacement().to_snapshot(&dir.hash))?;
        dir.note("d_final.bin");
        if let Some(q) = solver.q() {
            write_snapshot(&dir.file("q_final.bin"), &q.to_snapshot(&dir.hash))?;
            dir.note("q_final.bin");
        }
        let rep = solver.report();
        dir.write_json("run_3d.json", rep)?;
        checks.push(Check::new(
            "3D boundary monitor below tolerance",
            !rep.boundary_flagged,
            format!("max |D| next to the boundary {:.2e}", rep.boundary_max),
            json!({ "boundary_max": rep.boundary_max, "blowup_time": rep.blowup_time }),
        ));
    }
    let mut summary = Summary::new("simulate", cfg, checks);
    summary.dir = dir.finish(&summary)?;
    Ok(summary)
}

/// Solver continuation against heat-kernel quadrature at one time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HeatRow {
    pub tau: f64,
    pub t: f64,
    pub solver_re: f64,
    pub solver_im: f64,
    /// Exact angular reduction of the kernel on the `(r, z)` grid.
    pub tail_re: f64,
    pub tail_im: f64,
    /// 3D tensor quadrature of the lifted snapshot.
    pub lifted_re: f64,
    pub lifted_im: f64,
    pub rel_err_tail: f64,
    pub rel_err_lifted: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    #[serde(rename = "I4")]
    pub i4: f64,
    #[serde(rename = "I5")]
    pub i5: f64,
    pub partition_defect: f64,
}

fn relative_gap(solver: Complex64, other: Complex64) -> f64 {
    let m = block_from_complex(solver);
    max_entry(&(m - block_from_complex(other))) / max_entry(&m)
}

/// Continue the reduced solver past `t0` and compare `∇A(0, t0 + τ)` with
/// both heat-kernel quadratures of the `t0` snapshot.
pub fn heat_kernel_rows(p: &BumpProfile, grid: ReducedGrid, taus: &[f64], quad_n: usize) -> Result<Vec<HeatRow>> {
    if grid.nu == 0.0 {
        return Err(Error::Config("the heat-kernel representation needs ν > 0".into()));
    }
    let mut taus = taus.to_vec();
    taus.sort_by(f64::total_cmp);
    let mut solver = ReducedSolver::new(*p, grid)?;
    solver.advance_to(p.t0)?;
    let snapshot = solver.state().clone();
    let lifted = LiftedGradient::new(&snapshot);
    let nu = grid.nu;
    let mut rows = Vec::new();
    for &tau in &taus {
        solver.advance_to(p.t0 + tau)?;
        let c_solver = c_at_origin(solver.state())?;
        let c_tail = reduced_heat_tail(&snapshot, nu, tau)?;
        // the kernel is negligible beyond 10 standard deviations
        let half = grid.half_width.min(10.0 * (2.0 * nu * tau).sqrt());
        let q = heat_tail_from_sampler(half, quad_n, nu, tau, |x: &Vec3| lifted.sample(x))?;
        let c_lift = Complex64::new(q.value[(0, 0)], q.value[(1, 0)]);
        let parts = region_integrals(&snapshot, p, nu, tau)?;
        let i = parts.max_entries();
        rows.push(HeatRow {
            tau,
            t: p.t0 + tau,
            solver_re: c_solver.re,
            solver_im: c_solver.im,
            tail_re: c_tail.re,
            tail_im: c_tail.im,
            lifted_re: c_lift.re,
            lifted_im: c_lift.im,
            rel_err_tail: relative_gap(c_solver, c_tail),
            rel_err_lifted: relative_gap(c_solver, c_lift),
            i1: i[0],
            i2: i[1],
            i3: i[2],
            i4: i[3],
            i5: i[4],
            partition_defect: parts.partition_defect(),
        });
    }
    Ok(rows)
}

/// Heat-kernel cross-check and region split for the configured profile.
pub fn run_heatkernel(cfg: &RunConfig, out: Option<&Path>) -> Result<Summary> {
    let rows = heat_kernel_rows(&cfg.profile, cfg.reduced_grid(), &cfg.heatkernel.taus, cfg.heatkernel.quad_n)?;
    let mut dir = RunDir::create(cfg, "heatkernel", out)?;
    dir.write_csv("heatkernel.csv", &rows)?;
    let worst = rows.iter().map(|r| r.rel_err_lifted.max(r.rel_err_tail)).fold(0.0, f64::max);
    let defect = rows.iter().map(|r| r.partition_defect).fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "solver continuation matches the heat kernel to 1%",
            worst <= 1e-2,
            format!("worst relative gap {worst:.2e}"),
            json!({ "worst_relative_gap": worst }),
        ),
        Check::new(
            "region integrals partition the total",
            defect < 1e-10,
            format!("partition defect {defect:.2e}"),
            json!({ "partition_defect": defect }),
        ),
    ];
    let mut summary = Summary::new("heatkernel", cfg, checks);
    summary.dir = dir.finish(&summary)?;
    Ok(summary)
}

/// One probe of the Monte Carlo run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
    pub stderr_x: f64,
    pub stderr_y: f64,
    pub stderr_z: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub oracle_x: Option<f64>,
    pub oracle_y: Option<f64>,
    pub oracle_z: Option<f64>,
    /// Largest `|mean − oracle| / stderr` over the components.
    pub z_max: Option<f64>,
}

impl ProbeRow {
    fn new(x: &Vec3, t: f64, e: &McEstimate, seed: u64, oracle: Option<Vec3>) -> Self {
        let z_max = oracle.map(|o| (0..3).map(|k| (e.mean[k] - o[k]).abs() / e.stderr[k]).fold(0.0, f64::max));
        Self {
            x: x.x,
            y: x.y,
            z: x.z,
            t,
            mean_x: e.mean[0],
            mean_y: e.mean[1],
            mean_z: e.mean[2],
            stderr_x: e.stderr[0],
            stderr_y: e.stderr[1],
            stderr_z: e.stderr[2],
            n: e.n_paths,
            seed,
            oracle_x: oracle.map(|o| o.x),
            oracle_y: oracle.map(|o| o.y),
            oracle_z: oracle.map(|o| o.z),
            z_max,
        }
    }
}

/// Monte Carlo magnetization at the configured probes, optionally against
/// the deterministic grid solution.
pub fn stochastic_rows(cfg: &RunConfig) -> Result<Vec<ProbeRow>> {
    let st = &cfg.stochastic;
    let p = cfg.profile;
    let t = cfg.stochastic_time();
    let clebsch = ClebschData::coordinates(Arc::new(st.blob));
    let opts = McOptions {
        n_paths: st.n_paths,
        dt: st.dt,
        seed: cfg.seed,
        antithetic: st.antithetic,
        sigma: st.sigma,
        parallel: true,
    };
    let oracle = if st.oracle.enabled {
        let grid = st.oracle.grid();
        let spec = MSolveSpec::stable_with(&p, &grid, cfg.nu, st.oracle.order);
        Some(solve_m_deterministic(&p, spec, MagnetizationField::sample(grid, &st.blob), t, &[], |_| {})?.0)
    } else {
        None
    };
    st.probes
        .iter()
        .map(|x| {
            let x = Vec3::from(*x);
            let e = mc_magnetization(&p, &clebsch, cfg.nu, &x, t, &opts)?;
            let o = oracle.as_ref().map(|m| m.interpolate(&x)).transpose()?;
            Ok(ProbeRow::new(&x, t, &e, cfg.seed, o))
        })
        .collect()
}

pub fn run_stochastic(cfg: &RunConfig, out: Option<&Path>) -> Result<Summary> {
    let rows = stochastic_rows(cfg)?;
    let mut dir = RunDir::create(cfg, "stochastic", out)?;
    dir.write_csv("probes.csv", &rows)?;
    let mut checks = Vec::new();
    if cfg.stochastic.oracle.enabled && cfg.nu > 0.0 {
        let worst = rows.iter().filter_map(|r| r.z_max).fold(0.0, f64::max);
        checks.push(Check::new(
            "Monte Carlo within 3 standard errors of the grid solution",
            worst <= 3.0,
            format!("largest |z| = {worst:.2}"),
            json!({ "z_max": worst }),
        ));
    }
    let mut summary = Summary::new("stochastic", cfg, checks);
    summary.dir = dir.finish(&summary)?;
    Ok(summary)
}
