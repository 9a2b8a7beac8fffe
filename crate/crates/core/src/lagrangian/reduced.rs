//! Axisymmetric reduction of the label-map and inverse-Jacobian equations.
//!
//! The map is stored as the complex displacement `d = w − r` on a uniform
//! `(r, z)` grid with `r ∈ [0, L]` and `z ∈ [−L, L]`. Node `(i, j)` sits at
//! `r = i h_r`, `z = (j − (n_z − 1)/2) h_z` and is stored at `j n_r + i`.
//!
//! `Q` is equivariant, `Q(R x) = R Q(x) Rᵀ`, so it is carried in the local
//! frame of the half-plane `θ = 0`. Its nine entries are split by angular
//! order:
//!
//! | slot | entry                | order |
//! |------|----------------------|-------|
//! | 0, 1 | `(Q₁₁+Q₂₂)/2 − 1`, `(Q₂₁−Q₁₂)/2` | 0 |
//! | 2, 3 | `(Q₁₁−Q₂₂)/2`, `(Q₁₂+Q₂₁)/2`     | 2 |
//! | 4..8 | `Q₁₃, Q₂₃, Q₃₁, Q₃₂`              | 1 |
//! | 8    | `Q₃₃ − 1`                         | 0 |
//!
//! An order-`m` slot diffuses with `∂ᵣᵣ + ∂ᵣ/r − m²/r² + ∂zz`, is even and
//! free on the axis for `m = 0` and vanishes there otherwise. In the local
//! frame the equation for `Q` reads
//!
//! `∂ₜQ + Ω[K, Q] − νΔ_m Q = G Q + 2ν Q (Jᵣ Qᵣ + [K, J][K, Q]/r² + J_z Q_z)`
//!
//! with `K` the rotation generator, `G = ∇u` and `J = ∇A` in the local frame.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::explicit_dt_limit;
use crate::error::{invalid, Error, Result};
use crate::flow::BumpProfile;
use crate::linalg::{commutator, rotation_generator, Mat3};

/// Time integrator of the reduced solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Explicit SSP-RK3 on the full right-hand side (`d` only).
    Rk3,
    /// Strang splitting: exact swirl rotation, Peaceman–Rachford diffusion.
    StrangAdi,
}

/// `(r, z)` grid, time step and viscosity of a reduced run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedGrid {
    pub half_width: f64,
    pub n_r: usize,
    pub n_z: usize,
    pub dt: f64,
    pub nu: f64,
    pub scheme: TimeScheme,
}

impl ReducedGrid {
    /// Split-scheme grid with equal spacing in `r` and `z` and `dt = t0/200`.
    pub fn split(p: &BumpProfile, half_width: f64, n_r: usize, nu: f64) -> Self {
        Self { half_width, n_r, n_z: 2 * n_r - 1, dt: p.t0 / 200.0, nu, scheme: TimeScheme::StrangAdi }
    }

    /// Explicit grid with equal spacing and `dt` at the stability limit.
    pub fn explicit(p: &BumpProfile, half_width: f64, n_r: usize, nu: f64) -> Self {
        let mut g = Self { half_width, n_r, n_z: 2 * n_r - 1, dt: 1.0, nu, scheme: TimeScheme::Rk3 };
        g.dt = g.explicit_limit(p).min(p.t0 / 100.0);
        g
    }

    pub fn h_r(&self) -> f64 {
        self.half_width / (self.n_r - 1) as f64
    }

    pub fn h_z(&self) -> f64 {
        2.0 * self.half_width / (self.n_z - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h_r()
    }

    pub fn z(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.n_z - 1) as f64) * self.h_z()
    }

    pub fn node_count(&self) -> usize {
        self.n_r * self.n_z
    }

    /// Row of the `z = 0` plane, when it is a node row.
    pub fn mid_row(&self) -> Option<usize> {
        (self.n_z % 2 == 1).then_some((self.n_z - 1) / 2)
    }

    /// Largest stable step of the explicit scheme.
    pub fn explicit_limit(&self, p: &BumpProfile) -> f64 {
        let h = self.h_r().min(self.h_z());
        // the 1/r² axis term adds one more h⁻² to the Laplacian's spectral radius
        let diff = explicit_dt_limit(0.0, h, self.nu) * 6.0 / 7.0;
        let rot = if p.gamma_max() > 0.0 { 1.5 / p.gamma_max() } else { f64::INFINITY };
        diff.min(rot)
    }

    pub fn validate(&self, p: &BumpProfile) -> Result<()> {
        p.validate()?;
        if self.n_r < 5 || self.n_z < 5 {
            return Err(invalid(format!("reduced grid needs at least 5 nodes per axis, got {}x{}", self.n_r, self.n_z)));
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
        let across_r = (p.r_outer - p.r_inner) / self.h_r();
        let across_z = (p.z_outer - p.z_inner) / self.h_z();
        if across_r < 8.0 - 1e-9 || across_z < 8.0 - 1e-9 {
            return Err(invalid(format!(
                "shells must span at least 8 grid spacings (radial {across_r:.1}, axial {across_z:.1})"
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if self.scheme == TimeScheme::Rk3 {
            let limit = self.explicit_limit(p);
            if self.dt > limit * (1.0 + 1e-12) {
                return Err(Error::Stability { dt: self.dt, limit, reason: "explicit reduced RK3 contract" });
            }
        }
        Ok(())
    }

    /// Stability bound for the explicit `Q` substep while the swirl is active.
    pub fn q_reaction_limit(&self, p: &BumpProfile) -> f64 {
        let mut rate = 0.0_f64;
        for i in 0..self.n_r {
            let r = self.r(i);
            for j in 0..self.n_z {
                let z = self.z(j);
                let a = p.alpha_unchecked(r);
                let b = p.beta(z);
                let local = 3.0 * a * b + r * (p.alpha_prime(r) * b).abs() + r * (a * p.beta_prime(z.abs())).abs();
                rate = rate.max(local);
            }
        }
        rate *= p.gamma_max();
        if rate > 0.0 {
            1.5 / rate
        } else {
            f64::INFINITY
        }
    }
}

/// Reduced map at one time level.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub grid: ReducedGrid,
    pub time: f64,
    /// `d = w − r`, zero on the axis and on the outer boundary.
    pub d: Vec<Complex64>,
}

impl ReducedState {
    pub fn initial(grid: ReducedGrid) -> Self {
        Self { grid, time: 0.0, d: vec![Complex64::new(0.0, 0.0); grid.node_count()] }
    }

    /// The complex profile `w = r + d` at node `(i, j)`.
    pub fn w(&self, i: usize, j: usize) -> Complex64 {
        self.d[j * self.grid.n_r + i] + self.grid.r(i)
    }

    /// `∂w/∂r` on the axis at row `j` from the odd extension (fourth order).
    pub fn w_r_axis(&self, j: usize) -> Complex64 {
        let row = &self.d[j * self.grid.n_r..];
        Complex64::new(1.0, 0.0) + (8.0 * row[1] - row[2]) / (6.0 * self.grid.h_r())
    }

    /// Largest `|d|` on the layer adjacent to the outer boundary.
    pub fn boundary_max(&self) -> f64 {
        let (nr, nz) = (self.grid.n_r, self.grid.n_z);
        let mut worst = 0.0_f64;
        for j in 1..nz - 1 {
            worst = worst.max(self.d[j * nr + nr - 2].norm());
        }
        for i in 0..nr {
            worst = worst.max(self.d[nr + i].norm()).max(self.d[(nz - 2) * nr + i].norm());
        }
        worst
    }
}

/// `∂w/∂r(0, 0)`, the complex number encoding the horizontal block of `∇A(0)`.
pub fn c_at_origin(st: &ReducedState) -> Result<Complex64> {
    let j = st.grid.mid_row().ok_or_else(|| Error::Domain("z = 0 is not a node row of the reduced grid".into()))?;
    Ok(st.w_r_axis(j))
}

/// Monitors of a reduced run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ReducedReport {
    pub steps: usize,
    pub final_time: f64,
    pub boundary_max: f64,
    /// `(t, Q(0, t))` row-major, recorded after each step when `Q` is evolved.
    pub q_origin: Vec<(f64, [f64; 9])>,
    /// `(t, max |Q|)` after each step when `Q` is evolved.
    pub q_sup: Vec<(f64, f64)>,
    pub blowup_time: Option<f64>,
}

/// Tridiagonal operator rows `lower·x[k−1] + diag·x[k] + upper·x[k+1]`.
/// A row with all three coefficients zero is a Dirichlet row.
#[derive(Debug, Clone)]
struct Tridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

/// Precomputed Thomas elimination for `(I − θ L) x = f`, Dirichlet rows kept at `f`.
#[derive(Debug, Clone)]
struct ImplicitSolve {
    lower: Vec<f64>,
    inv_den: Vec<f64>,
    c_prime: Vec<f64>,
}

trait Field: Copy + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + std::ops::Mul<f64, Output = Self> {}
impl Field for f64 {}
impl Field for Complex64 {}

impl Tridiag {
    fn radial(grid: &ReducedGrid, order: u32) -> Self {
        let n = grid.n_r;
        let h = grid.h_r();
        let m2 = f64::from(order * order);
        let mut t = Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] };
        if order == 0 {
            // axis limit of ∂ᵣᵣ + ∂ᵣ/r is 2∂ᵣᵣ, with the even ghost value
            t.diag[0] = -4.0 / (h * h);
            t.upper[0] = 4.0 / (h * h);
        }
        for i in 1..n - 1 {
            let r = grid.r(i);
            t.lower[i] = 1.0 / (h * h) - 0.5 / (h * r);
            t.diag[i] = -2.0 / (h * h) - m2 / (r * r);
            t.upper[i] = 1.0 / (h * h) + 0.5 / (h * r);
        }
        t
    }

    fn axial(grid: &ReducedGrid) -> Self {
        let n = grid.n_z;
        let h = grid.h_z();
        let mut t = Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] };
        for j in 1..n - 1 {
            t.lower[j] = 1.0 / (h * h);
            t.diag[j] = -2.0 / (h * h);
            t.upper[j] = 1.0 / (h * h);
        }
        t
    }

    fn implicit(&self, theta: f64) -> ImplicitSolve {
        let n = self.diag.len();
        let mut out = ImplicitSolve { lower: vec![0.0; n], inv_den: vec![0.0; n], c_prime: vec![0.0; n] };
        let mut prev_c = 0.0;
        for k in 0..n {
            let a = -theta * self.lower[k];
            let b = 1.0 - theta * self.diag[k];
            let c = -theta * self.upper[k];
            let den = b - a * prev_c;
            out.lower[k] = a;
            out.inv_den[k] = 1.0 / den;
            out.c_prime[k] = c / den;
            prev_c = out.c_prime[k];
        }
        out
    }

    /// `y = x + θ L x` along a contiguous line.
    fn apply_line<T: Field>(&self, theta: f64, x: &[T], y: &mut [T]) {
        let n = x.len();
        y[0] = x[0] + (x[0] * self.diag[0] + x[1] * self.upper[0]) * theta;
        for k in 1..n - 1 {
            y[k] = x[k] + (x[k - 1] * self.lower[k] + x[k] * self.diag[k] + x[k + 1] * self.upper[k]) * theta;
        }
        y[n - 1] = x[n - 1] + (x[n - 2] * self.lower[n - 1] + x[n - 1] * self.diag[n - 1]) * theta;
    }
}

impl ImplicitSolve {
    fn solve_line<T: Field>(&self, x: &mut [T]) {
        let n = x.len();
        x[0] = x[0] * self.inv_den[0];
        for k in 1..n {
            x[k] = (x[k] - x[k - 1] * self.lower[k]) * self.inv_den[k];
        }
        for k in (0..n - 1).rev() {
            x[k] = x[k] - x[k + 1] * self.c_prime[k];
        }
    }

    /// Solve along `z` for every radial index at once (rows of length `nr`).
    fn solve_columns<T: Field>(&self, x: &mut [T], nr: usize) {
        let nz = x.len() / nr;
        for v in &mut x[..nr] {
            *v = *v * self.inv_den[0];
        }
        for j in 1..nz {
            let (prev, cur) = x[(j - 1) * nr..(j + 1) * nr].split_at_mut(nr);
            let (a, inv) = (self.lower[j], self.inv_den[j]);
            for (c, p) in cur.iter_mut().zip(prev.iter()) {
                *c = (*c - *p * a) * inv;
            }
        }
        for j in (0..nz - 1).rev() {
            let (cur, next) = x[j * nr..(j + 2) * nr].split_at_mut(nr);
            let cp = self.c_prime[j];
            for (c, nx) in cur.iter_mut().zip(next.iter()) {
                *c = *c - *nx * cp;
            }
        }
    }
}

impl Tridiag {
    /// `y = x + θ L_z x` applied column-wise on an `nr`-wide row-major array.
    fn apply_columns<T: Field>(&self, theta: f64, x: &[T], y: &mut [T], nr: usize) {
        let nz = x.len() / nr;
        for j in 0..nz {
            let (lo, di, up) = (self.lower[j] * theta, self.diag[j] * theta, self.upper[j] * theta);
            for i in 0..nr {
                let c = j * nr + i;
                let mut v = x[c] + x[c] * di;
                if j > 0 {
                    v = v + x[c - nr] * lo;
                }
                if j + 1 < nz {
                    v = v + x[c + nr] * up;
                }
                y[c] = v;
            }
        }
    }
}

/// Peaceman–Rachford step for one field.
struct Adi {
    theta: f64,
    radial: [Tridiag; 3],
    radial_solve: [ImplicitSolve; 3],
    axial: Tridiag,
    axial_solve: ImplicitSolve,
}

impl Adi {
    fn new(grid: &ReducedGrid, dt: f64) -> Self {
        let theta = 0.5 * dt * grid.nu;
        let radial = [Tridiag::radial(grid, 0), Tridiag::radial(grid, 1), Tridiag::radial(grid, 2)];
        let radial_solve = [radial[0].implicit(theta), radial[1].implicit(theta), radial[2].implicit(theta)];
        let axial = Tridiag::axial(grid);
        let axial_solve = axial.implicit(theta);
        Self { theta, radial, radial_solve, axial, axial_solve }
    }

    fn step<T: Field + Send + Sync>(&self, order: usize, f: &mut [T], tmp: &mut [T], nr: usize) {
        let (rad, rad_solve) = (&self.radial[order], &self.radial_solve[order]);
        self.axial.apply_columns(self.theta, f, tmp, nr);
        tmp.par_chunks_mut(nr).for_each(|row| rad_solve.solve_line(row));
        f.par_chunks_mut(nr).zip(tmp.par_chunks(nr)).for_each(|(out, row)| rad.apply_line(self.theta, row, out));
        self.axial_solve.solve_columns(f, nr);
    }
}

const ORDERS: [usize; 9] = [0, 0, 2, 2, 1, 1, 1, 1, 0];

/// Local-frame matrix from the nine slots (deviations from the identity).
fn slots_to_matrix(e: &[f64; 9]) -> Mat3 {
    let p = e[0] + 1.0;
    Mat3::new(p + e[2], e[3] - e[1], e[4], e[3] + e[1], p - e[2], e[5], e[6], e[7], e[8] + 1.0)
}

/// Slots of a matrix; `shift` subtracts the identity.
fn matrix_to_slots(m: &Mat3, shift: bool) -> [f64; 9] {
    let one = if shift { 1.0 } else { 0.0 };
    [
        0.5 * (m[(0, 0)] + m[(1, 1)]) - one,
        0.5 * (m[(1, 0)] - m[(0, 1)]),
        0.5 * (m[(0, 0)] - m[(1, 1)]),
        0.5 * (m[(0, 1)] + m[(1, 0)]),
        m[(0, 2)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)] - one,
    ]
}

/// Derivative-slot matrix (no identity part).
fn slots_to_derivative(e: &[f64; 9]) -> Mat3 {
    Mat3::new(e[0] + e[2], e[3] - e[1], e[4], e[3] + e[1], e[0] - e[2], e[5], e[6], e[7], e[8])
}

fn column_matrix(c0: Complex64, c1: Complex64, c2: Complex64, corner: f64) -> Mat3 {
    Mat3::new(c0.re, c1.re, c2.re, c0.im, c1.im, c2.im, 0.0, 0.0, corner)
}

/// Integrator for the reduced map and, optionally, the reduced `Q`.
pub struct ReducedSolver {
    profile: BumpProfile,
    grid: ReducedGrid,
    state: ReducedState,
    /// `α(r_i) β(z_j)`.
    ab: Vec<f64>,
    /// `r α'(r) β(z)` and `r α(r) ∂_z β(|z|)` for `∇u`.
    ab_r: Vec<f64>,
    ab_z: Vec<f64>,
    q: Option<[Vec<f64>; 9]>,
    q_cap: f64,
    late_dt: f64,
    report: ReducedReport,
    blown_up: bool,
    adi: Option<(f64, Adi)>,
    tmp_c: Vec<Complex64>,
    tmp_r: Vec<f64>,
}

impl ReducedSolver {
    pub fn new(profile: BumpProfile, grid: ReducedGrid) -> Result<Self> {
        grid.validate(&profile)?;
        let (nr, nz) = (grid.n_r, grid.n_z);
        let mut ab = vec![0.0; nr * nz];
        let mut ab_r = vec![0.0; nr * nz];
        let mut ab_z = vec![0.0; nr * nz];
        for j in 0..nz {
            let z = grid.z(j);
            let (b, bp) = (profile.beta(z), profile.beta_prime(z.abs()) * z.signum());
            for i in 0..nr {
                let r = grid.r(i);
                let a = profile.alpha_unchecked(r);
                ab[j * nr + i] = a * b;
                ab_r[j * nr + i] = r * profile.alpha_prime(r) * b;
                ab_z[j * nr + i] = r * a * bp;
            }
        }
        Ok(Self {
            profile,
            grid,
            state: ReducedState::initial(grid),
            ab,
            ab_r,
            ab_z,
            q: None,
            q_cap: f64::INFINITY,
            late_dt: grid.dt,
            report: ReducedReport::default(),
            blown_up: false,
            adi: None,
            tmp_c: vec![Complex64::new(0.0, 0.0); nr * nz],
            tmp_r: Vec::new(),
        })
    }

    /// Also evolve `Q`, stopping once `max |Q|` exceeds `q_cap`. `late_dt` is
    /// the step used once the swirl has stopped (`t ≥ t0`).
    pub fn with_q(profile: BumpProfile, grid: ReducedGrid, q_cap: f64, late_dt: f64) -> Result<Self> {
        if grid.scheme != TimeScheme::StrangAdi {
            return Err(invalid("the reduced Q equation is only available with the split scheme"));
        }
        if !(q_cap > 1.0) {
            return Err(invalid(format!("Q cap must exceed 1, got {q_cap}")));
        }
        if !(late_dt > 0.0) {
            return Err(invalid(format!("late time step must be positive, got {late_dt}")));
        }
        let limit = grid.q_reaction_limit(&profile);
        if grid.dt > limit {
            return Err(Error::Stability { dt: grid.dt, limit, reason: "explicit Q substep during spin-up" });
        }
        let mut s = Self::new(profile, grid)?;
        let n = grid.node_count();
        s.q = Some(std::array::from_fn(|_| vec![0.0; n]));
        s.q_cap = q_cap;
        s.late_dt = late_dt;
        s.tmp_r = vec![0.0; n];
        Ok(s)
    }

    pub fn state(&self) -> &ReducedState {
        &self.state
    }

    pub fn into_state(self) -> ReducedState {
        self.state
    }

    pub fn report(&self) -> &ReducedReport {
        &self.report
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// `Q` at a node, in the local frame.
    pub fn q_at(&self, i: usize, j: usize) -> Option<Mat3> {
        let q = self.q.as_ref()?;
        let c = j * self.grid.n_r + i;
        Some(slots_to_matrix(&std::array::from_fn(|k| q[k][c])))
    }

    /// `Q(0, t)`.
    pub fn q_origin(&self) -> Option<Mat3> {
        self.q_at(0, self.grid.mid_row()?)
    }

    /// `∇A` at a node in the local frame, from the stored map.
    pub fn jacobian_at(&self, i: usize, j: usize) -> Mat3 {
        let w = WView { g: &self.grid, w: &self.full_w(), nr: self.grid.n_r };
        w.jacobian(i, j).0
    }

    fn full_w(&self) -> Vec<Complex64> {
        let nr = self.grid.n_r;
        self.state.d.iter().enumerate().map(|(c, d)| d + self.grid.r(c % nr)).collect()
    }

    /// Advance to `t_end`, calling `each_step` after every step.
    pub fn advance_with(&mut self, t_end: f64, mut each_step: impl FnMut(&Self)) -> Result<bool> {
        let tol = 1e-12 * t_end.abs().max(1.0);
        while self.state.time < t_end - tol && !self.blown_up {
            let t = self.state.time;
            let nominal = if self.q.is_some() && t >= self.profile.t0 - tol { self.late_dt } else { self.grid.dt };
            let mut dt = nominal.min(t_end - t);
            // do not straddle the end of the spin-up with a long late step
            if t < self.profile.t0 - tol && t + dt > self.profile.t0 {
                dt = self.profile.t0 - t;
            }
            match self.grid.scheme {
                TimeScheme::Rk3 => self.step_rk3(dt),
                TimeScheme::StrangAdi => self.step_split(dt),
            }
            self.report.steps += 1;
            self.report.final_time = self.state.time;
            self.report.boundary_max = self.report.boundary_max.max(self.state.boundary_max());
            if self.q.is_some() {
                self.record_q(t);
            }
            each_step(self);
        }
        Ok(!self.blown_up)
    }

    /// Advance to `t_end`; returns `false` if `Q` blew up first.
    pub fn advance_to(&mut self, t_end: f64) -> Result<bool> {
        self.advance_with(t_end, |_| {})
    }

    fn record_q(&mut self, t_prev: f64) {
        let q = self.q.as_ref().expect("q present");
        let mut sup = 0.0_f64;
        let n = self.grid.node_count();
        for c in 0..n {
            let m = slots_to_matrix(&std::array::from_fn(|k| q[k][c]));
            sup = sup.max(m.iter().fold(0.0_f64, |a, v| if v.is_finite() { a.max(v.abs()) } else { f64::INFINITY }));
        }
        let t = self.state.time;
        self.report.q_sup.push((t, sup));
        if let Some(q0) = self.q_origin() {
            let mut row = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    row[3 * r + c] = q0[(r, c)];
                }
            }
            self.report.q_origin.push((t, row));
        }
        if !sup.is_finite() || sup > self.q_cap {
            self.blown_up = true;
            self.report.blowup_time = Some(t_prev);
        }
    }

    fn rotate_map(&mut self, t1: f64, t2: f64) {
        let ds = self.profile.angle_accumulated(t2) - self.profile.angle_accumulated(t1);
        if ds == 0.0 {
            return;
        }
        let nr = self.grid.n_r;
        let h = self.grid.h_r();
        self.state.d.par_chunks_mut(nr).zip(self.ab.par_chunks(nr)).for_each(|(row, ab)| {
            for (i, (d, a)) in row.iter_mut().zip(ab).enumerate() {
                if *a != 0.0 {
                    let r = i as f64 * h;
                    *d = (*d + r) * Complex64::from_polar(1.0, -a * ds) - r;
                }
            }
        });
    }

    fn adi_for(&mut self, dt: f64) -> &Adi {
        if self.adi.as_ref().is_none_or(|(cached, _)| *cached != dt) {
            self.adi = Some((dt, Adi::new(&self.grid, dt)));
        }
        &self.adi.as_ref().expect("just built").1
    }

    fn step_split(&mut self, dt: f64) {
        let t = self.state.time;
        let half = t + 0.5 * dt;
        if self.q.is_some() {
            self.q_substep(t, half);
        }
        self.rotate_map(t, half);
        if self.grid.nu > 0.0 {
            let nr = self.grid.n_r;
            self.adi_for(dt);
            let adi = &self.adi.as_ref().expect("built").1;
            adi.step(1, &mut self.state.d, &mut self.tmp_c, nr);
            if let Some(q) = self.q.as_mut() {
                for (k, comp) in q.iter_mut().enumerate() {
                    adi.step(ORDERS[k], comp, &mut self.tmp_r, nr);
                }
            }
        }
        if self.q.is_some() {
            self.q_substep(half, t + dt);
        }
        self.rotate_map(half, t + dt);
        self.state.time = t + dt;
    }

    fn rk3_rhs(&self, t: f64, d: &[Complex64], out: &mut [Complex64]) {
        let g = &self.grid;
        let (nr, nz) = (g.n_r, g.n_z);
        let gamma = self.profile.gamma_unchecked(t);
        let (hr, hz) = (g.h_r(), g.h_z());
        let nu = g.nu;
        out.par_chunks_mut(nr).enumerate().for_each(|(j, row)| {
            if j == 0 || j == nz - 1 {
                row.fill(Complex64::new(0.0, 0.0));
                return;
            }
            row[0] = Complex64::new(0.0, 0.0);
            row[nr - 1] = Complex64::new(0.0, 0.0);
            for i in 1..nr - 1 {
                let c = j * nr + i;
                let r = i as f64 * hr;
                let lap_r = (d[c + 1] - d[c] * 2.0 + d[c - 1]) / (hr * hr) + (d[c + 1] - d[c - 1]) / (2.0 * hr * r)
                    - d[c] / (r * r);
                let lap_z = (d[c + nr] - d[c] * 2.0 + d[c - nr]) / (hz * hz);
                let om = gamma * self.ab[c];
                row[i] = Complex64::new(0.0, -om) * (d[c] + r) + (lap_r + lap_z) * nu;
            }
        });
    }

    fn step_rk3(&mut self, dt: f64) {
        let t = self.state.time;
        let n = self.grid.node_count();
        let mut k = vec![Complex64::new(0.0, 0.0); n];
        let u0 = self.state.d.clone();
        self.rk3_rhs(t, &u0, &mut k);
        let mut u1: Vec<Complex64> = u0.iter().zip(&k).map(|(u, k)| u + k * dt).collect();
        self.rk3_rhs(t + dt, &u1, &mut k);
        for ((s, u), k) in u1.iter_mut().zip(&u0).zip(&k) {
            *s = u * 0.75 + (*s + k * dt) * 0.25;
        }
        self.rk3_rhs(t + 0.5 * dt, &u1, &mut k);
        for ((u, s), k) in self.state.d.iter_mut().zip(&u1).zip(&k) {
            *u = *u / 3.0 + (s + k * dt) * (2.0 / 3.0);
        }
        self.state.time = t + dt;
    }

    /// SSP-RK3 for the non-diffusive part of the `Q` equation over `[t1, t2]`,
    /// with the map rotated exactly to each stage time.
    fn q_substep(&mut self, t1: f64, t2: f64) {
        let dt = t2 - t1;
        let n = self.grid.node_count();
        let w1 = self.full_w();
        let s1 = self.profile.angle_accumulated(t1);
        let w_at = |tau: f64| -> Vec<Complex64> {
            let ds = self.profile.angle_accumulated(tau) - s1;
            if ds == 0.0 {
                return w1.clone();
            }
            w1.iter().zip(&self.ab).map(|(w, a)| w * Complex64::from_polar(1.0, -a * ds)).collect()
        };
        let q0: Vec<[f64; 9]> = {
            let q = self.q.as_ref().expect("q present");
            (0..n).map(|c| std::array::from_fn(|k| q[k][c])).collect()
        };
        let mut k = vec![[0.0; 9]; n];
        self.q_rhs(t1, &w_at(t1), &q0, &mut k);
        let mut s: Vec<[f64; 9]> = q0.iter().zip(&k).map(|(u, k)| std::array::from_fn(|m| u[m] + dt * k[m])).collect();
        self.q_rhs(t2, &w_at(t2), &s, &mut k);
        for ((s, u), k) in s.iter_mut().zip(&q0).zip(&k) {
            for m in 0..9 {
                s[m] = 0.75 * u[m] + 0.25 * (s[m] + dt * k[m]);
            }
        }
        self.q_rhs(0.5 * (t1 + t2), &w_at(0.5 * (t1 + t2)), &s, &mut k);
        let q = self.q.as_mut().expect("q present");
        for c in 0..n {
            for m in 0..9 {
                q[m][c] = q0[c][m] / 3.0 + 2.0 / 3.0 * (s[c][m] + dt * k[c][m]);
            }
        }
    }

    fn q_rhs(&self, t: f64, w: &[Complex64], q: &[[f64; 9]], out: &mut [[f64; 9]]) {
        let g = &self.grid;
        let (nr, nz) = (g.n_r, g.n_z);
        let gamma = self.profile.gamma_unchecked(t);
        let nu = g.nu;
        let view = WView { g, w, nr };
        let (hr, hz) = (g.h_r(), g.h_z());
        let k_gen = rotation_generator();
        out.par_chunks_mut(nr).enumerate().for_each(|(j, row)| {
            row.fill([0.0; 9]);
            if j == 0 || j == nz - 1 {
                return;
            }
            for i in 0..nr - 1 {
                let c = j * nr + i;
                let qm = slots_to_matrix(&q[c]);
                let qz = slots_to_derivative(&std::array::from_fn(|m| (q[c + nr][m] - q[c - nr][m]) / (2.0 * hz)));
                let qr = if i == 0 {
                    // only the order-1 slots have a radial slope on the axis
                    slots_to_derivative(&std::array::from_fn(|m| {
                        if ORDERS[m] == 1 {
                            (8.0 * q[c + 1][m] - q[c + 2][m]) / (6.0 * hr)
                        } else {
                            0.0
                        }
                    }))
                } else {
                    slots_to_derivative(&std::array::from_fn(|m| (q[c + 1][m] - q[c - 1][m]) / (2.0 * hr)))
                };
                let (jac, jac_r, jac_z) = view.jacobian(i, j);
                let om = gamma * self.ab[c];
                let mut rhs = -om * commutator(&k_gen, &qm);
                if gamma != 0.0 {
                    let grad_u = if i == 0 {
                        om * k_gen
                    } else {
                        Mat3::new(
                            0.0,
                            -om,
                            0.0,
                            om + gamma * self.ab_r[c],
                            0.0,
                            gamma * self.ab_z[c],
                            0.0,
                            0.0,
                            0.0,
                        )
                    };
                    rhs += grad_u * qm;
                }
                if nu > 0.0 {
                    let angular = if i == 0 {
                        commutator(&k_gen, &jac_r) * commutator(&k_gen, &qr)
                    } else {
                        let r = i as f64 * hr;
                        commutator(&k_gen, &jac) * commutator(&k_gen, &qm) / (r * r)
                    };
                    rhs += 2.0 * nu * qm * (jac_r * qr + angular + jac_z * qz);
                }
                let mut slots = matrix_to_slots(&rhs, false);
                if i == 0 {
                    for (m, v) in slots.iter_mut().enumerate() {
                        if ORDERS[m] != 0 {
                            *v = 0.0;
                        }
                    }
                }
                row[i] = slots;
            }
        });
    }
}

/// Read-only access to `w` for local-frame Jacobians.
struct WView<'a> {
    g: &'a ReducedGrid,
    w: &'a [Complex64],
    nr: usize,
}

impl WView<'_> {
    fn w_r_axis(&self, j: usize) -> Complex64 {
        let c = j * self.nr;
        (8.0 * self.w[c + 1] - self.w[c + 2]) / (6.0 * self.g.h_r())
    }

    /// `(J, ∂ᵣJ, ∂zJ)` at an interior node or an axis node.
    fn jacobian(&self, i: usize, j: usize) -> (Mat3, Mat3, Mat3) {
        let (hr, hz) = (self.g.h_r(), self.g.h_z());
        let nr = self.nr;
        let zero = Complex64::new(0.0, 0.0);
        let iu = Complex64::new(0.0, 1.0);
        if i == 0 {
            let c0 = self.w_r_axis(j);
            let c_z = (self.w_r_axis(j + 1) - self.w_r_axis(j - 1)) / (2.0 * hz);
            let jac = column_matrix(c0, iu * c0, zero, 1.0);
            let jac_r = column_matrix(zero, zero, c_z, 0.0);
            let jac_z = column_matrix(c_z, iu * c_z, zero, 0.0);
            return (jac, jac_r, jac_z);
        }
        let c = j * nr + i;
        let w = self.w;
        let r = i as f64 * hr;
        let w_r = (w[c + 1] - w[c - 1]) / (2.0 * hr);
        let w_z = (w[c + nr] - w[c - nr]) / (2.0 * hz);
        let w_rr = (w[c + 1] - 2.0 * w[c] + w[c - 1]) / (hr * hr);
        let w_zz = (w[c + nr] - 2.0 * w[c] + w[c - nr]) / (hz * hz);
        let w_rz = (w[c + nr + 1] - w[c + nr - 1] - w[c - nr + 1] + w[c - nr - 1]) / (4.0 * hr * hz);
        let jac = column_matrix(w_r, iu * w[c] / r, w_z, 1.0);
        let jac_r = column_matrix(w_rr, iu * (w_r - w[c] / r) / r, w_rz, 0.0);
        let jac_z = column_matrix(w_rz, iu * w_z / r, w_zz, 0.0);
        (jac, jac_r, jac_z)
    }
}

/// Integrate the reduced map to `t_end`, calling `observer` at each requested time.
pub fn solve_reduced(
    p: &BumpProfile,
    grid: ReducedGrid,
    t_end: f64,
    snapshot_times: &[f64],
    mut observer: impl FnMut(&ReducedState),
) -> Result<(ReducedState, ReducedReport)> {
    let mut solver = ReducedSolver::new(*p, grid)?;
    for &t in snapshot_times.iter().filter(|&&t| t <= t_end) {
        solver.advance_to(t)?;
        observer(solver.state());
    }
    solver.advance_to(t_end)?;
    let report = solver.report.clone();
    Ok((solver.state, report))
}

/// Closed-form inviscid profile `w = r e^{−i S(t) α β}`.
pub fn euler_profile(p: &BumpProfile, r: f64, z: f64, t: f64) -> Complex64 {
    r * Complex64::from_polar(1.0, -p.angle_accumulated(t) * p.alpha_unchecked(r) * p.beta(z))
}

/// Largest Frobenius norm of `∇(A − A^E)` over the grid at the state's time.
///
/// With `δ = w − w^E`, the 3D norm is `(|∂ᵣδ|² + |δ/r|² + |∂zδ|²)^{1/2}`,
/// independent of the angle; on the axis `δ/r` is replaced by `∂ᵣδ`.
pub fn euler_discrepancy(st: &ReducedState, p: &BumpProfile) -> f64 {
    let g = &st.grid;
    let (nr, nz) = (g.n_r, g.n_z);
    let (hr, hz) = (g.h_r(), g.h_z());
    let t = st.time;
    let delta: Vec<Complex64> = (0..nr * nz)
        .map(|c| {
            let (i, j) = (c % nr, c / nr);
            st.d[c] + g.r(i) - euler_profile(p, g.r(i), g.z(j), t)
        })
        .collect();
    (1..nz - 1)
        .into_par_iter()
        .map(|j| {
            let mut worst = 0.0_f64;
            for i in 0..nr - 1 {
                let c = j * nr + i;
                let (d_r, d_over_r) = if i == 0 {
                    let v = (8.0 * delta[c + 1] - delta[c + 2]) / (6.0 * hr);
                    (v, v)
                } else {
                    ((delta[c + 1] - delta[c - 1]) / (2.0 * hr), delta[c] / g.r(i))
                };
                let d_z = (delta[c + nr] - delta[c - nr]) / (2.0 * hz);
                worst = worst.max((d_r.norm_sqr() + d_over_r.norm_sqr() + d_z.norm_sqr()).sqrt());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::euler_jacobian;
    use crate::linalg::{block_from_complex, max_entry, rot_z, Vec3};
    use std::f64::consts::PI;

    fn profile(s: f64) -> BumpProfile {
        BumpProfile::with_shell(0.25, s)
    }

    fn grid(p: &BumpProfile, n_r: usize, nu: f64) -> ReducedGrid {
        ReducedGrid::split(p, 2.0 * p.outer_extent(), n_r, nu)
    }

    #[test]
    fn inviscid_split_matches_closed_form() {
        let p = profile(2.0 * PI);
        let g = grid(&p, 81, 0.0);
        let (st, _) = solve_reduced(&p, g, 0.7, &[], |_| {}).unwrap();
        for j in (0..g.n_z).step_by(7) {
            for i in 0..g.n_r {
                let exact = euler_profile(&p, g.r(i), g.z(j), 0.7);
                assert!((st.w(i, j) - exact).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_angle_keeps_identity() {
        let p = profile(0.0);
        for g in [grid(&p, 81, 0.05), ReducedGrid::explicit(&p, 2.5, 81, 0.05)] {
            let (st, _) = solve_reduced(&p, g, 1.5, &[], |_| {}).unwrap();
            assert!(st.d.iter().all(|d| d.norm() == 0.0));
            assert_eq!(c_at_origin(&st).unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn explicit_and_split_agree() {
        let p = profile(PI);
        let a = solve_reduced(&p, grid(&p, 81, 0.02), 1.0, &[], |_| {}).unwrap().0;
        let mut g = ReducedGrid::explicit(&p, 2.5, 81, 0.02);
        g.dt = g.dt.min(1e-3);
        let b = solve_reduced(&p, g, 1.0, &[], |_| {}).unwrap().0;
        let worst = a.d.iter().zip(&b.d).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(worst < 2e-3, "{worst}");
    }

    #[test]
    fn rejects_unresolved_shells_and_unstable_steps() {
        let p = profile(PI);
        assert!(ReducedSolver::new(p, grid(&p, 11, 0.01)).is_err());
        let mut g = ReducedGrid::explicit(&p, 2.5, 81, 0.05);
        g.dt *= 3.0;
        assert!(matches!(ReducedSolver::new(p, g), Err(Error::Stability { .. })));
    }

    #[test]
    fn origin_value_matches_euler_block_when_inviscid() {
        let p = profile(1.3);
        let (st, _) = solve_reduced(&p, grid(&p, 81, 0.0), 2.0, &[], |_| {}).unwrap();
        let block = block_from_complex(c_at_origin(&st).unwrap());
        let exact = euler_jacobian(&Vec3::zeros(), 2.0, &p);
        assert!(max_entry(&(block - exact)) < 1e-12);
    }

    #[test]
    fn slots_round_trip() {
        let m = Mat3::from_fn(|r, c| (r * 3 + c) as f64 * 0.37 - 1.1);
        let back = slots_to_matrix(&matrix_to_slots(&m, true));
        assert!((back - m).norm() < 1e-14);
        assert!((slots_to_derivative(&matrix_to_slots(&m, false)) - m).norm() < 1e-14);
    }

    #[test]
    fn inviscid_q_is_inverse_rotation_at_origin() {
        let p = profile(2.0);
        let g = grid(&p, 81, 0.0);
        let mut g = g;
        g.dt = g.dt.min(0.5 * g.q_reaction_limit(&p));
        let mut solver = ReducedSolver::with_q(p, g, 1e3, 0.05).unwrap();
        assert!(solver.advance_to(1.5).unwrap());
        let q0 = solver.q_origin().unwrap();
        assert!(max_entry(&(q0 - rot_z(2.0))) < 1e-3, "{q0}");
    }

    #[test]
    fn viscous_q_inverts_local_jacobian() {
        // Off the manifold Z = 0 the Q equation amplifies errors at a rate of
        // about 2ν|∂∇A||∂Q|, so only a gently twisted flow stays tractable.
        let p = BumpProfile::with_shell(1.0, 0.5);
        let mut g = grid(&p, 81, 0.02);
        g.dt = g.dt.min(0.5 * g.q_reaction_limit(&p));
        let mut solver = ReducedSolver::with_q(p, g, 1e3, 0.02).unwrap();
        assert!(solver.advance_to(1.5).unwrap());
        let mut worst = 0.0_f64;
        for j in (5..g.n_z - 5).step_by(3) {
            for i in (0..g.n_r - 5).step_by(3) {
                let z = solver.jacobian_at(i, j) * solver.q_at(i, j).unwrap() - Mat3::identity();
                worst = worst.max(z.norm());
            }
        }
        assert!(worst < 2e-2, "{worst}");
    }
}
