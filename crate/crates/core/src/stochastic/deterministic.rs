//! Grid solver for `∂ₜm + u·∇m + (∇u)ᵀm − νΔm = 0`.
//!
//! By default the same stencils and stepping as the 3D map solver:
//! second-order central differences, upwind-biased third-order advection when
//! `ν = 0`, SSP-RK3, homogeneous Dirichlet data on the box. A fourth-order
//! central variant is available for use as a high-accuracy reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{VectorSampler, VelocityField};
use crate::error::{invalid, Error, Result};
use crate::lagrangian::explicit_dt_limit;
use crate::linalg::{Mat3, Vec3};

/// Cubic node lattice on `[-L, L]^3`.
///
/// Bounded grids include both faces (`h = 2L/(n−1)`, centred coordinates).
/// Periodic grids omit the upper face (`h = 2L/n`, `x_i = −L + i h`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub half_width: f64,
    pub n: usize,
    pub periodic: bool,
}

impl BoxGrid {
    pub fn bounded(half_width: f64, n: usize) -> Self {
        Self { half_width, n, periodic: false }
    }

    pub fn periodic(half_width: f64, n: usize) -> Self {
        Self { half_width, n, periodic: true }
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            2.0 * self.half_width / self.n as f64
        } else {
            2.0 * self.half_width / (self.n - 1) as f64
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        if self.periodic {
            -self.half_width + i as f64 * self.spacing()
        } else {
            (i as f64 - 0.5 * (self.n - 1) as f64) * self.spacing()
        }
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(self.coord(i), self.coord(j), self.coord(k))
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 || !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid(format!("box grid needs n ≥ 5 and L > 0, got n = {}, L = {}", self.n, self.half_width)));
        }
        Ok(())
    }
}

/// Node samples of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationField {
    pub grid: BoxGrid,
    pub time: f64,
    pub values: Vec<[f64; 3]>,
}

impl MagnetizationField {
    pub fn zeros(grid: BoxGrid) -> Self {
        Self { grid, time: 0.0, values: vec![[0.0; 3]; grid.len()] }
    }

    pub fn sample(grid: BoxGrid, f: &(impl VectorSampler + ?Sized)) -> Self {
        let n = grid.n;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|c| {
                let (i, j, k) = (c % n, (c / n) % n, c / (n * n));
                f.value(&grid.node(i, j, k)).into()
            })
            .collect();
        Self { grid, time: 0.0, values }
    }

    pub fn from_fn(grid: BoxGrid, f: impl Fn(&Vec3) -> Vec3 + Sync) -> Self {
        let n = grid.n;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|c| f(&grid.node(c % n, (c / n) % n, c / (n * n))).into())
            .collect();
        Self { grid, time: 0.0, values }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::from(self.values[self.grid.idx(i, j, k)])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flat_map(|v| v.iter()).fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Largest `|m|` on the outermost node layer.
    pub fn boundary_max(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0_f64;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                        worst = worst.max(self.at(i, j, k).norm());
                    }
                }
            }
        }
        worst
    }

    /// Tricubic Lagrange interpolation (fourth order) at `x`. Needs two
    /// nodes on either side in every direction.
    pub fn interpolate(&self, x: &Vec3) -> Result<Vec3> {
        let g = &self.grid;
        let h = g.spacing();
        let mut base = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let s = (x[a] - g.coord(0)) / h;
            let i0 = s.floor() as isize - 1;
            if i0 < 0 || i0 + 3 >= g.n as isize || !s.is_finite() {
                return Err(Error::Domain(format!("point {x:?} is too close to the grid edge for cubic interpolation")));
            }
            base[a] = i0 as usize;
            let f = s - (i0 + 1) as f64;
            // nodes at offsets −1, 0, 1, 2 relative to floor
            w[a] = [
                -f * (f - 1.0) * (f - 2.0) / 6.0,
                (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
                -(f + 1.0) * f * (f - 2.0) / 2.0,
                (f + 1.0) * f * (f - 1.0) / 6.0,
            ];
        }
        let mut out = Vec3::zeros();
        for (c, wz) in w[2].iter().enumerate() {
            for (b, wy) in w[1].iter().enumerate() {
                for (a, wx) in w[0].iter().enumerate() {
                    out += wx * wy * wz * self.at(base[0] + a, base[1] + b, base[2] + c);
                }
            }
        }
        Ok(out)
    }
}

/// Spatial order of the interior stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilOrder {
    #[default]
    Second,
    /// Five-point central stencils; the node layer next to the boundary
    /// keeps the second-order ones.
    Fourth,
}

impl StencilOrder {
    /// Factor applied to the explicit step limit. The five-point stencils
    /// enlarge the spectral radius of the first derivative by about 1.37
    /// and of the Laplacian by 4/3.
    fn dt_factor(self, speed: f64, h: f64, nu: f64) -> f64 {
        match self {
            Self::Second => explicit_dt_limit(speed, h, nu),
            Self::Fourth => explicit_dt_limit(1.372 * speed, h, nu * 4.0 / 3.0),
        }
    }
}

/// Time step, viscosity and stencil order of a deterministic magnetization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MSolveSpec {
    pub nu: f64,
    pub dt: f64,
    #[serde(default)]
    pub order: StencilOrder,
}

impl MSolveSpec {
    /// Step at the stability limit of the explicit contract.
    pub fn stable(u: &impl VelocityField, grid: &BoxGrid, nu: f64) -> Self {
        Self::stable_with(u, grid, nu, StencilOrder::Second)
    }

    pub fn stable_with(u: &impl VelocityField, grid: &BoxGrid, nu: f64, order: StencilOrder) -> Self {
        let dt = order.dt_factor(u.speed_bound(grid.half_width), grid.spacing(), nu).min(1e-2);
        Self { nu, dt, order }
    }

    fn limit(&self, u: &impl VelocityField, grid: &BoxGrid) -> f64 {
        self.order.dt_factor(u.speed_bound(grid.half_width), grid.spacing(), self.nu)
    }
}

/// Diagnostics of [`solve_m_deterministic`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MRunReport {
    pub steps: usize,
    pub final_time: f64,
    pub boundary_max: f64,
}

/// Integrate the viscous magnetization equation from `m0` up to `t_end`,
/// calling `observer` at each requested time (landing on it exactly).
pub fn solve_m_deterministic(
    u: &impl VelocityField,
    spec: MSolveSpec,
    m0: MagnetizationField,
    t_end: f64,
    times: &[f64],
    mut observer: impl FnMut(&MagnetizationField),
) -> Result<(MagnetizationField, MRunReport)> {
    let grid = m0.grid;
    grid.validate()?;
    if grid.periodic {
        return Err(invalid("the magnetization solver uses Dirichlet data on a bounded grid"));
    }
    if !(spec.nu >= 0.0 && spec.nu.is_finite()) {
        return Err(invalid(format!("viscosity must be finite and non-negative, got {}", spec.nu)));
    }
    let limit = spec.limit(u, &grid);
    if !(spec.dt > 0.0) || spec.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability { dt: spec.dt, limit, reason: "explicit RK3 magnetization contract" });
    }
    let statics = StaticFlow::build(u, &grid);
    let mut m = m0;
    let mut stage = m.values.clone();
    let mut rhs = vec![[0.0; 3]; grid.len()];
    let mut report = MRunReport::default();
    let mut marks: Vec<f64> = times.iter().copied().filter(|&t| t > m.time && t <= t_end).collect();
    marks.push(t_end);
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    for mark in marks {
        while m.time < mark - 1e-12 * mark.abs().max(1.0) {
            let dt = spec.dt.min(mark - m.time);
            let t = m.time;
            let ctx = |t: f64| StepCtx { grid: &grid, flow: &statics, u, t, nu: spec.nu, order: spec.order };
            ctx(t).rhs(&m.values, &mut rhs);
            for ((s, v), r) in stage.iter_mut().zip(&m.values).zip(&rhs) {
                for c in 0..3 {
                    s[c] = v[c] + dt * r[c];
                }
            }
            ctx(t + dt).rhs(&stage, &mut rhs);
            for ((s, v), r) in stage.iter_mut().zip(&m.values).zip(&rhs) {
                for c in 0..3 {
                    s[c] = 0.75 * v[c] + 0.25 * (s[c] + dt * r[c]);
                }
            }
            ctx(t + 0.5 * dt).rhs(&stage, &mut rhs);
            for ((v, s), r) in m.values.iter_mut().zip(&stage).zip(&rhs) {
                for c in 0..3 {
                    v[c] = v[c] / 3.0 + 2.0 / 3.0 * (s[c] + dt * r[c]);
                }
            }
            m.time = t + dt;
            report.steps += 1;
        }
        m.time = mark;
        if times.contains(&mark) {
            observer(&m);
        }
    }
    report.final_time = m.time;
    report.boundary_max = m.boundary_max();
    Ok((m, report))
}

/// Node velocities and gradients at a reference time for separable flows.
struct StaticFlow {
    t_ref: Option<f64>,
    u: Vec<[f64; 3]>,
    grad: Vec<[f64; 9]>,
}

impl StaticFlow {
    fn build(u: &impl VelocityField, grid: &BoxGrid) -> Self {
        let Some(t_ref) = u.reference_time() else { return Self { t_ref: None, u: Vec::new(), grad: Vec::new() } };
        let n = grid.n;
        let (vel, grad): (Vec<[f64; 3]>, Vec<[f64; 9]>) = (0..grid.len())
            .into_par_iter()
            .map(|c| {
                let x = grid.node(c % n, (c / n) % n, c / (n * n));
                let g: Mat3 = u.gradient(&x, t_ref);
                let gr = [g[(0, 0)], g[(0, 1)], g[(0, 2)], g[(1, 0)], g[(1, 1)], g[(1, 2)], g[(2, 0)], g[(2, 1)], g[(2, 2)]];
                let v: [f64; 3] = u.velocity(&x, t_ref).into();
                (v, gr)
            })
            .unzip();
        Self { t_ref: Some(t_ref), u: vel, grad }
    }
}

struct StepCtx<'a, U> {
    grid: &'a BoxGrid,
    flow: &'a StaticFlow,
    u: &'a U,
    t: f64,
    nu: f64,
    order: StencilOrder,
}

#[inline]
fn upwind3(fm2: f64, fm1: f64, f0: f64, fp1: f64, fp2: f64, vel: f64, inv6h: f64) -> f64 {
    if vel > 0.0 {
        (2.0 * fp1 + 3.0 * f0 - 6.0 * fm1 + fm2) * inv6h
    } else {
        (-fp2 + 6.0 * fp1 - 3.0 * f0 - 2.0 * fm1) * inv6h
    }
}

impl<U: VelocityField> StepCtx<'_, U> {
    fn rhs(&self, m: &[[f64; 3]], out: &mut [[f64; 3]]) {
        let n = self.grid.n;
        let scale = self.flow.t_ref.map(|tr| self.u.time_factor(self.t) / self.u.time_factor(tr));
        out.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| self.slab(k, m, slab, scale));
    }

    fn slab(&self, k: usize, m: &[[f64; 3]], out: &mut [[f64; 3]], scale: Option<f64>) {
        let g = self.grid;
        let n = g.n;
        let h = g.spacing();
        let (inv2h, inv6h, invh2) = (0.5 / h, 1.0 / (6.0 * h), 1.0 / (h * h));
        let (inv12h, inv12h2) = (1.0 / (12.0 * h), 1.0 / (12.0 * h * h));
        let (sx, sy, sz) = (1usize, n, n * n);
        let nu = self.nu;
        for j in 0..n {
            for i in 0..n {
                let local = j * n + i;
                if k == 0 || j == 0 || i == 0 || k == n - 1 || j == n - 1 || i == n - 1 {
                    out[local] = [0.0; 3];
                    continue;
                }
                let c = g.idx(i, j, k);
                let (vel, gr) = match scale {
                    Some(f) => {
                        let v = self.flow.u[c];
                        let gg = self.flow.grad[c];
                        ([f * v[0], f * v[1], f * v[2]], gg.map(|e| f * e))
                    }
                    None => {
                        let x = g.node(i, j, k);
                        let gm = self.u.gradient(&x, self.t);
                        let v = self.u.velocity(&x, self.t);
                        (
                            [v.x, v.y, v.z],
                            [gm[(0, 0)], gm[(0, 1)], gm[(0, 2)], gm[(1, 0)], gm[(1, 1)], gm[(1, 2)], gm[(2, 0)], gm[(2, 1)], gm[(2, 2)]],
                        )
                    }
                };
                let near_edge = i < 2 || j < 2 || k < 2 || i > n - 3 || j > n - 3 || k > n - 3;
                let wide = self.order == StencilOrder::Fourth && !near_edge;
                let upwind = nu == 0.0 && !near_edge && !wide;
                let mc = m[c];
                let mut r = [0.0; 3];
                for comp in 0..3 {
                    let f = |off: isize| m[(c as isize + off) as usize][comp];
                    let (sx, sy, sz) = (sx as isize, sy as isize, sz as isize);
                    let adv = if wide {
                        let d1 = |s: isize| (8.0 * (f(s) - f(-s)) - (f(2 * s) - f(-2 * s))) * inv12h;
                        vel[0] * d1(sx) + vel[1] * d1(sy) + vel[2] * d1(sz)
                    } else if upwind {
                        vel[0] * upwind3(f(-2 * sx), f(-sx), mc[comp], f(sx), f(2 * sx), vel[0], inv6h)
                            + vel[1] * upwind3(f(-2 * sy), f(-sy), mc[comp], f(sy), f(2 * sy), vel[1], inv6h)
                            + vel[2] * upwind3(f(-2 * sz), f(-sz), mc[comp], f(sz), f(2 * sz), vel[2], inv6h)
                    } else {
                        vel[0] * (f(sx) - f(-sx)) * inv2h + vel[1] * (f(sy) - f(-sy)) * inv2h + vel[2] * (f(sz) - f(-sz)) * inv2h
                    };
                    let lap = if nu > 0.0 && wide {
                        let d2 = |s: isize| (16.0 * (f(s) + f(-s)) - (f(2 * s) + f(-2 * s)) - 30.0 * mc[comp]) * inv12h2;
                        d2(sx) + d2(sy) + d2(sz)
                    } else if nu > 0.0 {
                        ((f(sx) + f(-sx)) + (f(sy) + f(-sy)) + (f(sz) + f(-sz)) - 6.0 * mc[comp]) * invh2
                    } else {
                        0.0
                    };
                    // (∇u)ᵀ m: Σ_j m_j ∂_comp u_j
                    let stretch = gr[comp] * mc[0] + gr[3 + comp] * mc[1] + gr[6 + comp] * mc[2];
                    r[comp] = -adv - stretch + nu * lap;
                }
                out[local] = r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::fields::{Blob, ConstantVelocity};

    #[test]
    fn zero_initial_data_stays_zero() {
        let grid = BoxGrid::bounded(2.0, 17);
        let u = crate::flow::BumpProfile::with_shell(0.5, 2.0);
        let spec = MSolveSpec::stable(&u, &grid, 0.01);
        let (m, rep) = solve_m_deterministic(&u, spec, MagnetizationField::zeros(grid), 0.3, &[], |_| {}).unwrap();
        assert_eq!(m.sup_norm(), 0.0);
        assert!(rep.steps > 0);
    }

    #[test]
    fn unstable_step_is_rejected() {
        let grid = BoxGrid::bounded(2.0, 17);
        let u = ConstantVelocity(Vec3::new(1.0, 0.0, 0.0));
        let spec = MSolveSpec { nu: 0.1, dt: 1.0, order: StencilOrder::Second };
        let r = solve_m_deterministic(&u, spec, MagnetizationField::zeros(grid), 0.3, &[], |_| {});
        assert!(matches!(r, Err(Error::Stability { .. })));
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let grid = BoxGrid::bounded(1.0, 11);
        let f = |x: &Vec3| Vec3::new(x.x * x.x * x.y, x.z.powi(3) - x.x, 1.0 + x.y * x.z);
        let m = MagnetizationField::from_fn(grid, f);
        let p = Vec3::new(0.13, -0.27, 0.31);
        assert!((m.interpolate(&p).unwrap() - f(&p)).norm() < 1e-13);
        assert!(m.interpolate(&Vec3::new(0.95, 0.0, 0.0)).is_err());
    }

    #[test]
    fn observer_sees_requested_times() {
        let grid = BoxGrid::bounded(2.0, 13);
        let u = ConstantVelocity(Vec3::zeros());
        let m0 = MagnetizationField::sample(grid, &Blob { center: [0.0; 3], radius: 1.0, amplitude: [1.0, 0.0, 0.0], twist: 0.0 });
        let mut seen = Vec::new();
        let spec = MSolveSpec::stable(&u, &grid, 0.05);
        solve_m_deterministic(&u, spec, m0, 0.2, &[0.05, 0.2], |m| seen.push(m.time)).unwrap();
        assert_eq!(seen, vec![0.05, 0.2]);
    }
}
