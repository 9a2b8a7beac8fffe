//! Full 3D finite-difference solver on the cube `[-L, L]^3`.
//!
//! Second-order central differences for diffusion and gradients. Advection
//! is central when `ν > 0` and third-order upwind-biased when `ν = 0`.
//! Time integration is the three-stage strong-stability-preserving RK3.
//!
//! The vertical displacement `D₃` has neither forcing nor initial data for
//! the swirl family, so it is identically zero and only the horizontal pair
//! is evolved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::explicit_dt_limit;
use crate::error::{invalid, Error, Result};
use crate::flow::BumpProfile;
use crate::linalg::{Mat3, Vec3};

/// Cubic grid, time step and viscosity of a 3D run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Half-width `L` of the cube `[-L, L]^3`.
    pub half_width: f64,
    /// Nodes per axis. Odd counts put the origin on a node.
    pub n: usize,
    pub dt: f64,
    pub nu: f64,
}

impl GridSpec {
    /// Default box `L = 4 max(R_o, Z_o)` with a time step at the stability limit.
    pub fn for_profile(p: &BumpProfile, n: usize, nu: f64) -> Self {
        Self::with_half_width(p, 4.0 * p.outer_extent(), n, nu)
    }

    pub fn with_half_width(p: &BumpProfile, half_width: f64, n: usize, nu: f64) -> Self {
        let mut g = Self { half_width, n, dt: 1.0, nu };
        g.dt = g.stable_dt(p);
        g
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    /// Node coordinate, computed about the centre so mirrored nodes are exact negatives.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n - 1) as f64) * self.spacing()
    }

    pub fn origin_index(&self) -> Option<usize> {
        (self.n % 2 == 1).then_some((self.n - 1) / 2)
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Largest time step allowed by the stability contract (capped at 1e-2·t0
    /// when neither constraint binds).
    pub fn stable_dt(&self, p: &BumpProfile) -> f64 {
        explicit_dt_limit(p.max_speed(), self.spacing(), self.nu).min(1e-2 * p.t0)
    }

    pub fn validate(&self, p: &BumpProfile) -> Result<()> {
        p.validate()?;
        if self.n < 5 {
            return Err(invalid(format!("need at least 5 nodes per axis, got {}", self.n)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(invalid(format!("viscosity must be finite and non-negative, got {}", self.nu)));
        }
        if self.half_width < 2.0 * p.r_outer || self.half_width < 2.0 * p.z_outer {
            return Err(invalid(format!(
                "half-width {} must be at least twice the outer radius and half-height",
                self.half_width
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        let limit = explicit_dt_limit(p.max_speed(), self.spacing(), self.nu);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Stability { dt: self.dt, limit, reason: "explicit RK3 advection/diffusion contract" });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }
}

/// Node samples of `D = A − x` at one time level.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub grid: GridSpec,
    pub time: f64,
    /// Horizontal components per node, `idx = (k n + j) n + i`.
    pub values: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, time: 0.0, values: vec![[0.0; 2]; grid.node_count()] }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let v = self.values[self.grid.idx(i, j, k)];
        Vec3::new(v[0], v[1], 0.0)
    }

    /// `∇A = I + ∇D` at an interior node by second-order central differences.
    pub fn jacobian_at(&self, i: usize, j: usize, k: usize) -> Mat3 {
        let g = &self.grid;
        let inv2h = 0.5 / g.spacing();
        let v = &self.values;
        let mut m = Mat3::identity();
        let nbrs = [
            (g.idx(i + 1, j, k), g.idx(i - 1, j, k)),
            (g.idx(i, j + 1, k), g.idx(i, j - 1, k)),
            (g.idx(i, j, k + 1), g.idx(i, j, k - 1)),
        ];
        for (col, (p, q)) in nbrs.into_iter().enumerate() {
            for row in 0..2 {
                m[(row, col)] += (v[p][row] - v[q][row]) * inv2h;
            }
        }
        m
    }

    /// Largest `|D|` on the layer of nodes adjacent to the Dirichlet boundary.
    pub fn boundary_max(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0_f64;
        for k in 1..n - 1 {
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let on_layer = i == 1 || j == 1 || k == 1 || i == n - 2 || j == n - 2 || k == n - 2;
                    if on_layer {
                        let v = self.values[self.grid.idx(i, j, k)];
                        worst = worst.max(v[0].hypot(v[1]));
                    }
                }
            }
        }
        worst
    }
}

/// Node samples of the inverse-Jacobian field `Q`, row-major 3×3 per node.
#[derive(Debug, Clone)]
pub struct QField {
    pub grid: GridSpec,
    pub time: f64,
    pub values: Vec<[f64; 9]>,
}

impl QField {
    pub fn identity(grid: GridSpec) -> Self {
        Self { grid, time: 0.0, values: vec![IDENTITY9; grid.node_count()] }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> Mat3 {
        Mat3::from_row_slice(&self.values[self.grid.idx(i, j, k)])
    }

    /// Largest absolute entry over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flat_map(|q| q.iter()).fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

const IDENTITY9: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

/// Monitors gathered while stepping.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub steps: usize,
    pub final_time: f64,
    /// Largest `|D|` seen next to the boundary over the run.
    pub boundary_max: f64,
    /// Set when `boundary_max` exceeded the configured tolerance.
    pub boundary_flagged: bool,
    /// `(t, sup |Q|)` after every step, when `Q` is integrated.
    pub q_sup_history: Vec<(f64, f64)>,
    /// Last time at which `Q` was finite and below the cap, if a blowup occurred.
    pub blowup_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Reached,
    /// `Q` left the admissible range; the payload is the last valid time.
    QBlowup { last_valid_time: f64, q_sup: f64 },
}

/// Static spatial parts of `u` and `∇u` (to be multiplied by `γ(t)`).
#[derive(Clone, Copy, Default)]
struct NodeFlow {
    ux: f64,
    uy: f64,
    /// Rows 0 and 1 of `∇u / γ`; row 2 vanishes.
    grad: [f64; 6],
}

/// Explicit 3D integrator for `D` and, optionally, `Q`.
pub struct CartesianSolver {
    profile: BumpProfile,
    grid: GridSpec,
    flow: Vec<NodeFlow>,
    d: DisplacementField,
    q: Option<QField>,
    stage_d: Vec<[f64; 2]>,
    rhs_d: Vec<[f64; 2]>,
    stage_q: Vec<[f64; 9]>,
    rhs_q: Vec<[f64; 9]>,
    q_cap: f64,
    boundary_tol: f64,
    report: RunReport,
    blown_up: bool,
}

impl CartesianSolver {
    /// A solver for `D` alone.
    pub fn new(profile: BumpProfile, grid: GridSpec) -> Result<Self> {
        Self::build(profile, grid, None)
    }

    /// A solver that co-integrates `Q`, stopping once `sup |Q|` exceeds `q_cap`.
    pub fn with_q(profile: BumpProfile, grid: GridSpec, q_cap: f64) -> Result<Self> {
        if !(q_cap > 1.0) {
            return Err(invalid(format!("Q cap must exceed 1, got {q_cap}")));
        }
        Self::build(profile, grid, Some(q_cap))
    }

    fn build(profile: BumpProfile, grid: GridSpec, q_cap: Option<f64>) -> Result<Self> {
        grid.validate(&profile)?;
        let n = grid.n;
        let mut flow = vec![NodeFlow::default(); grid.node_count()];
        let unit = BumpProfile { s: profile.t0, ..profile };
        // γ(t) = s/t0 · h'(t/t0); with s = t0 the static part below carries no γ.
        let t_ref = 0.5 * profile.t0;
        let g_ref = unit.gamma_unchecked(t_ref);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = Vec3::new(grid.coord(i), grid.coord(j), grid.coord(k));
                    let om = profile.alpha_unchecked(x.x.hypot(x.y)) * profile.beta(x.z);
                    let gu = unit.velocity_gradient(&x, t_ref) / g_ref;
                    flow[grid.idx(i, j, k)] = NodeFlow {
                        ux: -om * x.y,
                        uy: om * x.x,
                        grad: [gu[(0, 0)], gu[(0, 1)], gu[(0, 2)], gu[(1, 0)], gu[(1, 1)], gu[(1, 2)]],
                    };
                }
            }
        }
        let with_q = q_cap.is_some();
        let nodes = grid.node_count();
        Ok(Self {
            profile,
            grid,
            flow,
            d: DisplacementField::zeros(grid),
            q: with_q.then(|| QField::identity(grid)),
            stage_d: vec![[0.0; 2]; nodes],
            rhs_d: vec![[0.0; 2]; nodes],
            stage_q: if with_q { vec![IDENTITY9; nodes] } else { Vec::new() },
            rhs_q: if with_q { vec![[0.0; 9]; nodes] } else { Vec::new() },
            q_cap: q_cap.unwrap_or(f64::INFINITY),
            boundary_tol: 1e-6,
            report: RunReport::default(),
            blown_up: false,
        })
    }

    pub fn set_boundary_tolerance(&mut self, tol: f64) {
        self.boundary_tol = tol;
    }

    pub fn time(&self) -> f64 {
        self.d.time
    }

    pub fn displacement(&self) -> &DisplacementField {
        &self.d
    }

    pub fn q(&self) -> Option<&QField> {
        self.q.as_ref()
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Step until `t_end`, shortening the last step to land on it exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<StepOutcome> {
        if self.blown_up {
            return Ok(StepOutcome::QBlowup {
                last_valid_time: self.report.blowup_time.unwrap_or(self.d.time),
                q_sup: self.q.as_ref().map_or(0.0, |q| q.sup_norm()),
            });
        }
        while self.d.time < t_end - 1e-12 * t_end.abs().max(1.0) {
            let dt = self.grid.dt.min(t_end - self.d.time);
            // D and Q are rolled back together so that the pair stays consistent
            let prev = self.q.as_ref().map(|q| (q.values.clone(), self.d.values.clone()));
            self.step(dt);
            if let Some(q) = &mut self.q {
                let sup = q.sup_norm();
                self.report.q_sup_history.push((q.time, sup));
                if !sup.is_finite() || sup > self.q_cap {
                    let last = self.d.time - dt;
                    self.report.blowup_time = Some(last);
                    self.blown_up = true;
                    if let Some((q_prev, d_prev)) = prev {
                        q.values = q_prev;
                        q.time = last;
                        self.d.values = d_prev;
                        self.d.time = last;
                        self.report.final_time = last;
                    }
                    return Ok(StepOutcome::QBlowup { last_valid_time: last, q_sup: sup });
                }
            }
        }
        Ok(StepOutcome::Reached)
    }

    fn step(&mut self, dt: f64) {
        let t = self.d.time;
        let with_q = self.q.is_some();
        // stage 1
        self.eval_rhs(t, Buffer::State);
        let d0 = &self.d.values;
        for ((s, u), k) in self.stage_d.iter_mut().zip(d0).zip(&self.rhs_d) {
            s[0] = u[0] + dt * k[0];
            s[1] = u[1] + dt * k[1];
        }
        if let Some(q) = &self.q {
            for ((s, u), k) in self.stage_q.iter_mut().zip(&q.values).zip(&self.rhs_q) {
                for m in 0..9 {
                    s[m] = u[m] + dt * k[m];
                }
            }
        }
        // stage 2
        self.eval_rhs(t + dt, Buffer::Stage);
        for ((s, u), k) in self.stage_d.iter_mut().zip(&self.d.values).zip(&self.rhs_d) {
            for m in 0..2 {
                s[m] = 0.75 * u[m] + 0.25 * (s[m] + dt * k[m]);
            }
        }
        if let Some(q) = &self.q {
            for ((s, u), k) in self.stage_q.iter_mut().zip(&q.values).zip(&self.rhs_q) {
                for m in 0..9 {
                    s[m] = 0.75 * u[m] + 0.25 * (s[m] + dt * k[m]);
                }
            }
        }
        // stage 3
        self.eval_rhs(t + 0.5 * dt, Buffer::Stage);
        for ((u, s), k) in self.d.values.iter_mut().zip(&self.stage_d).zip(&self.rhs_d) {
            for m in 0..2 {
                u[m] = u[m] / 3.0 + 2.0 / 3.0 * (s[m] + dt * k[m]);
            }
        }
        if with_q {
            let q = self.q.as_mut().expect("q present");
            for ((u, s), k) in q.values.iter_mut().zip(&self.stage_q).zip(&self.rhs_q) {
                for m in 0..9 {
                    u[m] = u[m] / 3.0 + 2.0 / 3.0 * (s[m] + dt * k[m]);
                }
            }
            q.time = t + dt;
        }
        self.d.time = t + dt;
        self.report.steps += 1;
        self.report.final_time = self.d.time;
        let bmax = self.d.boundary_max();
        self.report.boundary_max = self.report.boundary_max.max(bmax);
        self.report.boundary_flagged = self.report.boundary_max > self.boundary_tol;
    }

    fn eval_rhs(&mut self, t: f64, which: Buffer) {
        let gamma = self.profile.gamma_unchecked(t);
        let (d, q): (&[[f64; 2]], Option<&[[f64; 9]]>) = match which {
            Buffer::State => (&self.d.values, self.q.as_ref().map(|q| q.values.as_slice())),
            Buffer::Stage => (&self.stage_d, self.q.as_ref().map(|_| self.stage_q.as_slice())),
        };
        let ctx = RhsContext { grid: &self.grid, flow: &self.flow, gamma, d, q };
        let slab = self.grid.n * self.grid.n;
        match q {
            Some(_) => {
                self.rhs_d
                    .par_chunks_mut(slab)
                    .zip(self.rhs_q.par_chunks_mut(slab))
                    .enumerate()
                    .for_each(|(k, (out_d, out_q))| ctx.slab(k, out_d, Some(out_q)));
            }
            None => {
                self.rhs_d.par_chunks_mut(slab).enumerate().for_each(|(k, out_d)| ctx.slab(k, out_d, None));
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Buffer {
    State,
    Stage,
}

struct RhsContext<'a> {
    grid: &'a GridSpec,
    flow: &'a [NodeFlow],
    gamma: f64,
    d: &'a [[f64; 2]],
    q: Option<&'a [[f64; 9]]>,
}

#[inline]
fn upwind3(fm2: f64, fm1: f64, f0: f64, fp1: f64, fp2: f64, vel: f64, inv6h: f64) -> f64 {
    if vel > 0.0 {
        (2.0 * fp1 + 3.0 * f0 - 6.0 * fm1 + fm2) * inv6h
    } else {
        (-fp2 + 6.0 * fp1 - 3.0 * f0 - 2.0 * fm1) * inv6h
    }
}

impl RhsContext<'_> {
    fn slab(&self, k: usize, out_d: &mut [[f64; 2]], mut out_q: Option<&mut [[f64; 9]]>) {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let nu = self.grid.nu;
        let inv2h = 0.5 / h;
        let inv6h = 1.0 / (6.0 * h);
        let invh2 = 1.0 / (h * h);
        let inv4h2 = 0.25 * invh2;
        let (sx, sy, sz) = (1usize, n, n * n);
        let g = self.gamma;
        let boundary_slab = k == 0 || k == n - 1;
        for j in 0..n {
            for i in 0..n {
                let local = j * n + i;
                if boundary_slab || i == 0 || j == 0 || i == n - 1 || j == n - 1 || g == 0.0 && nu == 0.0 {
                    out_d[local] = [0.0; 2];
                    if let Some(oq) = out_q.as_deref_mut() {
                        oq[local] = [0.0; 9];
                    }
                    continue;
                }
                let c = (k * n + j) * n + i;
                let fl = &self.flow[c];
                let (ux, uy) = (g * fl.ux, g * fl.uy);
                let near_edge = i < 2 || j < 2 || i > n - 3 || j > n - 3;
                let upwind = nu == 0.0 && !near_edge;
                let d = self.d;

                // displacement
                let mut rd = [0.0; 2];
                for m in 0..2 {
                    let f0 = d[c][m];
                    let adv = if upwind {
                        ux * upwind3(d[c - 2 * sx][m], d[c - sx][m], f0, d[c + sx][m], d[c + 2 * sx][m], ux, inv6h)
                            + uy * upwind3(
                                d[c - 2 * sy][m],
                                d[c - sy][m],
                                f0,
                                d[c + sy][m],
                                d[c + 2 * sy][m],
                                uy,
                                inv6h,
                            )
                    } else {
                        ux * (d[c + sx][m] - d[c - sx][m]) * inv2h + uy * (d[c + sy][m] - d[c - sy][m]) * inv2h
                    };
                    let lap = if nu > 0.0 {
                        ((d[c + sx][m] + d[c - sx][m]) + (d[c + sy][m] + d[c - sy][m]) + (d[c + sz][m] + d[c - sz][m])
                            - 6.0 * f0)
                            * invh2
                    } else {
                        0.0
                    };
                    rd[m] = -adv + nu * lap;
                }
                rd[0] -= ux;
                rd[1] -= uy;
                out_d[local] = rd;

                let (Some(q), Some(oq)) = (self.q, out_q.as_deref_mut()) else { continue };

                // first derivatives of Q along x, y, z
                let mut dq = [[0.0; 9]; 3];
                for m in 0..9 {
                    dq[0][m] = (q[c + sx][m] - q[c - sx][m]) * inv2h;
                    dq[1][m] = (q[c + sy][m] - q[c - sy][m]) * inv2h;
                    dq[2][m] = (q[c + sz][m] - q[c - sz][m]) * inv2h;
                }
                let qc = &q[c];
                let mut rq = [0.0; 9];
                for m in 0..9 {
                    let adv = if upwind {
                        ux * upwind3(q[c - 2 * sx][m], q[c - sx][m], qc[m], q[c + sx][m], q[c + 2 * sx][m], ux, inv6h)
                            + uy * upwind3(
                                q[c - 2 * sy][m],
                                q[c - sy][m],
                                qc[m],
                                q[c + sy][m],
                                q[c + 2 * sy][m],
                                uy,
                                inv6h,
                            )
                    } else {
                        ux * dq[0][m] + uy * dq[1][m]
                    };
                    let lap = if nu > 0.0 {
                        ((q[c + sx][m] + q[c - sx][m]) + (q[c + sy][m] + q[c - sy][m]) + (q[c + sz][m] + q[c - sz][m])
                            - 6.0 * qc[m])
                            * invh2
                    } else {
                        0.0
                    };
                    rq[m] = -adv + nu * lap;
                }
                // (∇u) Q, with rows 0 and 1 of ∇u only
                let gu = &fl.grad;
                for col in 0..3 {
                    let (q0, q1, q2) = (qc[col], qc[3 + col], qc[6 + col]);
                    rq[col] += g * (gu[0] * q0 + gu[1] * q1 + gu[2] * q2);
                    rq[3 + col] += g * (gu[3] * q0 + gu[4] * q1 + gu[5] * q2);
                }
                if nu > 0.0 {
                    // second derivatives of D: hess[m][a][b] = ∂a ∂b D_m
                    let mut hess = [[[0.0; 3]; 3]; 2];
                    let strides = [sx, sy, sz];
                    for m in 0..2 {
                        for a in 0..3 {
                            let sa = strides[a];
                            hess[m][a][a] = (d[c + sa][m] - 2.0 * d[c][m] + d[c - sa][m]) * invh2;
                            for b in a + 1..3 {
                                let sb = strides[b];
                                let v = ((d[c + sa + sb][m] + d[c - sa - sb][m])
                                    - (d[c + sa - sb][m] + d[c - sa + sb][m]))
                                    * inv4h2;
                                hess[m][a][b] = v;
                                hess[m][b][a] = v;
                            }
                        }
                    }
                    // 2ν Σ_k Q (∂k ∇A) (∂k Q), (∂k ∇A)_{ab} = ∂k ∂b A_a, zero third row
                    let mut acc = [0.0; 9];
                    for kk in 0..3 {
                        // P = (∂k ∇A) (∂k Q): rows 0, 1 only
                        let mut pm = [[0.0; 3]; 2];
                        for a in 0..2 {
                            for col in 0..3 {
                                pm[a][col] = hess[a][kk][0] * dq[kk][col]
                                    + hess[a][kk][1] * dq[kk][3 + col]
                                    + hess[a][kk][2] * dq[kk][6 + col];
                            }
                        }
                        for row in 0..3 {
                            for col in 0..3 {
                                acc[3 * row + col] += qc[3 * row] * pm[0][col] + qc[3 * row + 1] * pm[1][col];
                            }
                        }
                    }
                    for m in 0..9 {
                        rq[m] += 2.0 * nu * acc[m];
                    }
                }
                oq[local] = rq;
            }
        }
    }
}

/// Integrate `D` from zero to `t_end`, calling `observer` at each requested
/// time (which must be increasing and not exceed `t_end`).
pub fn solve_displacement(
    p: &BumpProfile,
    grid: GridSpec,
    t_end: f64,
    snapshot_times: &[f64],
    mut observer: impl FnMut(&DisplacementField),
) -> Result<(DisplacementField, RunReport)> {
    let mut solver = CartesianSolver::new(*p, grid)?;
    for &t in snapshot_times.iter().filter(|&&t| t <= t_end) {
        solver.advance_to(t)?;
        observer(solver.displacement());
    }
    solver.advance_to(t_end)?;
    Ok((solver.d, solver.report))
}

/// Integrate `Q` alongside `D` (the `A`-snapshots needed by the quadratic
/// term are produced at matching stage times). Returns the final fields,
/// the report with the `sup |Q|` history, and whether a blowup stopped the
/// run early.
pub fn solve_q(
    p: &BumpProfile,
    grid: GridSpec,
    t_end: f64,
    q_cap: f64,
) -> Result<(DisplacementField, QField, RunReport, StepOutcome)> {
    let mut solver = CartesianSolver::with_q(*p, grid, q_cap)?;
    let outcome = solver.advance_to(t_end)?;
    let q = solver.q.take().expect("solver built with Q");
    Ok((solver.d, q, solver.report, outcome))
}

/// `I + ∇D(0)` by fourth-order central differences.
pub fn gradient_at_origin(d: &DisplacementField) -> Result<Mat3> {
    let g = &d.grid;
    let o = g.origin_index().ok_or_else(|| Error::Domain(format!("origin is not a node of an n = {} grid", g.n)))?;
    let h = g.spacing();
    let fourth = |f: &dyn Fn(isize) -> Vec3| (-f(2) + 8.0 * f(1) - 8.0 * f(-1) + f(-2)) / (12.0 * h);
    let oi = o as isize;
    let at = |i: isize, j: isize, k: isize| d.at((oi + i) as usize, (oi + j) as usize, (oi + k) as usize);
    let cols = [fourth(&|s| at(s, 0, 0)), fourth(&|s| at(0, s, 0)), fourth(&|s| at(0, 0, s))];
    let mut m = Mat3::identity();
    for (c, col) in cols.iter().enumerate() {
        for r in 0..3 {
            m[(r, c)] += col[r];
        }
    }
    Ok(m)
}

/// Largest Frobenius norm of `(∇A) Q − I` over interior nodes.
pub fn z_defect(d: &DisplacementField, q: &QField) -> Result<f64> {
    if d.grid != q.grid || (d.time - q.time).abs() > 1e-12 * d.time.max(1.0) {
        return Err(invalid("displacement and Q fields must share grid and time"));
    }
    let n = d.grid.n;
    let mut worst = 0.0_f64;
    for k in 1..n - 1 {
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let z = d.jacobian_at(i, j, k) * q.at(i, j, k) - Mat3::identity();
                worst = worst.max(z.norm());
            }
        }
    }
    Ok(worst)
}

/// Largest absolute second derivative of any component of `A` at the origin
/// (central stencils; `x` itself contributes nothing).
pub fn hessian_origin(d: &DisplacementField) -> Result<f64> {
    let g = &d.grid;
    let o = g.origin_index().ok_or_else(|| Error::Domain(format!("origin is not a node of an n = {} grid", g.n)))?;
    let h = g.spacing();
    let at = |di: isize, dj: isize, dk: isize| {
        d.at((o as isize + di) as usize, (o as isize + dj) as usize, (o as isize + dk) as usize)
    };
    let unit = |a: usize| {
        let mut e = [0isize; 3];
        e[a] = 1;
        e
    };
    let mut worst = 0.0_f64;
    for a in 0..3 {
        for b in a..3 {
            let (ea, eb) = (unit(a), unit(b));
            let v = if a == b {
                ((at(ea[0], ea[1], ea[2]) + at(-ea[0], -ea[1], -ea[2])) - 2.0 * at(0, 0, 0)) / (h * h)
            } else {
                ((at(ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]) + at(-ea[0] - eb[0], -ea[1] - eb[1], -ea[2] - eb[2]))
                    - (at(ea[0] - eb[0], ea[1] - eb[1], ea[2] - eb[2])
                        + at(-ea[0] + eb[0], -ea[1] + eb[1], -ea[2] + eb[2])))
                    / (4.0 * h * h)
            };
            worst = worst.max(v.abs().max());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::euler_jacobian;
    use crate::linalg::{max_entry, rot_z};
    use std::f64::consts::PI;

    fn small(p: &BumpProfile, n: usize, nu: f64) -> GridSpec {
        GridSpec::with_half_width(p, 2.0 * p.outer_extent(), n, nu)
    }

    #[test]
    fn zero_rotation_leaves_displacement_zero() {
        let p = BumpProfile::with_shell(0.5, 0.0);
        let g = small(&p, 21, 1e-2);
        let (d, rep) = solve_displacement(&p, g, 0.5, &[], |_| {}).unwrap();
        assert!(d.values.iter().all(|v| *v == [0.0, 0.0]));
        assert!(rep.steps > 0);
        assert_eq!(gradient_at_origin(&d).unwrap(), Mat3::identity());
        let (_, q, _, _) = solve_q(&p, g, 0.5, 1e3).unwrap();
        assert!(q.values.iter().all(|v| *v == IDENTITY9));
    }

    #[test]
    fn rejects_unstable_step_and_bad_domain() {
        let p = BumpProfile::with_shell(0.5, PI);
        let mut g = small(&p, 21, 1e-2);
        g.dt *= 2.5;
        assert!(matches!(CartesianSolver::new(p, g), Err(Error::Stability { .. })));
        let g = GridSpec::with_half_width(&p, 2.0, 21, 1e-2);
        assert!(CartesianSolver::new(p, g).is_err());
    }

    #[test]
    fn origin_must_be_a_node() {
        let p = BumpProfile::with_shell(0.5, PI);
        let d = DisplacementField::zeros(small(&p, 20, 0.0));
        assert!(gradient_at_origin(&d).is_err());
        assert!(hessian_origin(&d).is_err());
        let d = DisplacementField::zeros(small(&p, 21, 0.0));
        assert_eq!(gradient_at_origin(&d).unwrap(), Mat3::identity());
    }

    #[test]
    fn inviscid_origin_jacobian_matches_euler_map() {
        let p = BumpProfile::with_shell(0.5, PI);
        let g = small(&p, 61, 0.0);
        let (d, _) = solve_displacement(&p, g, p.t0, &[], |_| {}).unwrap();
        let jac = gradient_at_origin(&d).unwrap();
        let exact = euler_jacobian(&Vec3::zeros(), p.t0, &p);
        assert!(max_entry(&(jac - exact)) < 1e-3, "{}", max_entry(&(jac - exact)));
    }

    #[test]
    fn inviscid_q_is_inverse_rotation() {
        let p = BumpProfile::with_shell(0.5, 2.0);
        let g = small(&p, 61, 0.0);
        let (_, q, _, outcome) = solve_q(&p, g, p.t0, 1e3).unwrap();
        assert_eq!(outcome, StepOutcome::Reached);
        let o = g.origin_index().unwrap();
        let q0 = q.at(o, o, o);
        assert!(max_entry(&(q0 - rot_z(p.s))) < 1e-3, "{q0}");
    }

    #[test]
    fn z_defect_shrinks_under_refinement_for_a_gentle_flow() {
        let p = BumpProfile::with_shell(1.0, 0.25);
        let defect = |n| {
            let (d, q, _, outcome) = solve_q(&p, small(&p, n, 1e-2), p.t0, 1e3).unwrap();
            assert_eq!(outcome, StepOutcome::Reached);
            z_defect(&d, &q).unwrap()
        };
        let (coarse, fine) = (defect(33), defect(49));
        assert!(coarse / fine >= 1.5, "{coarse} -> {fine}");
    }

    #[test]
    fn discrete_solution_is_odd_about_the_axis() {
        let p = BumpProfile::with_shell(0.5, 2.5);
        let g = small(&p, 25, 2e-2);
        let (d, _) = solve_displacement(&p, g, 1.3, &[], |_| {}).unwrap();
        assert_eq!(hessian_origin(&d).unwrap(), 0.0);
        let n = g.n;
        for (i, j, k) in [(3, 5, 7), (10, 11, 12), (14, 4, 20)] {
            let a = d.at(i, j, k);
            let b = d.at(n - 1 - i, n - 1 - j, k);
            let c = d.at(i, j, n - 1 - k);
            assert_eq!(a, -b);
            assert_eq!(a, c);
        }
    }

    #[test]
    fn quarter_turn_conjugates_origin_jacobian() {
        // Rotating the grid by 90° maps nodes to nodes, so the discrete solution
        // inherits the symmetry exactly.
        let p = BumpProfile::with_shell(0.5, 3.0);
        let g = small(&p, 25, 1e-2);
        let (d, _) = solve_displacement(&p, g, 1.0, &[], |_| {}).unwrap();
        let n = g.n;
        let quarter = rot_z(0.5 * PI);
        for (i, j, k) in [(3, 5, 7), (10, 16, 12)] {
            let x = d.at(i, j, k);
            // node (i, j) rotated by +90° lands on (n-1-j, i)
            let y = d.at(n - 1 - j, i, k);
            assert!((quarter * x - y).norm() < 1e-13);
        }
        let jac = gradient_at_origin(&d).unwrap();
        assert!((quarter * jac * quarter.transpose() - jac).norm() < 1e-13);
    }
}
