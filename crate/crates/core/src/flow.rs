//! The rotating-cylinder swirl family.
//!
//! In cylindrical coordinates the velocity is purely azimuthal,
//! `u_θ(r, z, t) = α(r) β(|z|) γ(t) r`, i.e. the fluid inside the inner
//! cylinder rotates rigidly by the total angle `s` during `[0, t0]` while
//! everything outside the outer cylinder stays at rest.
//!
//! The cutoffs are built from the standard smooth step
//! `h(τ) = g(τ) / (g(τ) + g(1 − τ))`, `g(τ) = exp(−1/τ)` for `τ > 0`.
//! The spin-up rate is `γ(t) = (s/t0) h'(t/t0)`, so that the accumulated
//! angle has the closed form `S(t) = s h(t/t0)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Mat3, Vec3};

/// Parameters of the swirl family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpProfile {
    /// Radius of the rigidly rotating core.
    pub r_inner: f64,
    /// Radius beyond which the fluid is at rest.
    pub r_outer: f64,
    /// Half-height of the rigidly rotating core.
    pub z_inner: f64,
    /// Half-height beyond which the fluid is at rest.
    pub z_outer: f64,
    /// Spin-up duration.
    pub t0: f64,
    /// Total rotation angle accumulated over `[0, t0]`, in `[0, 2π]`.
    pub s: f64,
}

impl BumpProfile {
    pub fn new(r_inner: f64, r_outer: f64, z_inner: f64, z_outer: f64, t0: f64, s: f64) -> Result<Self> {
        let p = Self { r_inner, r_outer, z_inner, z_outer, t0, s };
        p.validate()?;
        Ok(p)
    }

    /// `R_i = Z_i = t0 = 1` with shells of thickness 0.25.
    pub fn default_with_angle(s: f64) -> Self {
        Self::with_shell(0.25, s)
    }

    /// `R_i = Z_i = t0 = 1` with shells of thickness 0.1.
    pub fn thin_with_angle(s: f64) -> Self {
        Self::with_shell(0.1, s)
    }

    /// Unit core and spin-up time with both shells of the given thickness.
    pub fn with_shell(thickness: f64, s: f64) -> Self {
        Self { r_inner: 1.0, r_outer: 1.0 + thickness, z_inner: 1.0, z_outer: 1.0 + thickness, t0: 1.0, s }
    }

    pub fn with_s(self, s: f64) -> Self {
        Self { s, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_inner, self.r_outer, self.z_inner, self.z_outer, self.t0, self.s]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("profile parameters must be finite"));
        }
        if !(0.0 < self.r_inner && self.r_inner < self.r_outer) {
            return Err(invalid(format!("need 0 < R_i < R_o, got {} / {}", self.r_inner, self.r_outer)));
        }
        if !(0.0 < self.z_inner && self.z_inner < self.z_outer) {
            return Err(invalid(format!("need 0 < Z_i < Z_o, got {} / {}", self.z_inner, self.z_outer)));
        }
        if self.t0 <= 0.0 {
            return Err(invalid(format!("need t0 > 0, got {}", self.t0)));
        }
        if !(0.0..=std::f64::consts::TAU + 1e-12).contains(&self.s) {
            return Err(invalid(format!("rotation angle s = {} outside [0, 2π]", self.s)));
        }
        Ok(())
    }

    /// Largest of the two cylinder extents.
    pub fn outer_extent(&self) -> f64 {
        self.r_outer.max(self.z_outer)
    }

    /// Radial cutoff `α(r)`.
    pub fn alpha(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(invalid(format!("alpha needs r >= 0, got {r}")));
        }
        Ok(self.alpha_unchecked(r))
    }

    /// Axial cutoff `β(|z|)`.
    pub fn beta(&self, z: f64) -> f64 {
        1.0 - smooth_step((z.abs() - self.z_inner) / (self.z_outer - self.z_inner))
    }

    /// Spin-up rate `γ(t)`.
    pub fn gamma(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(invalid(format!("gamma needs t >= 0, got {t}")));
        }
        Ok(self.gamma_unchecked(t))
    }

    /// Accumulated angle `S(t) = ∫₀ᵗ γ`.
    pub fn angle_accumulated(&self, t: f64) -> f64 {
        self.s * smooth_step(t / self.t0)
    }

    pub(crate) fn alpha_unchecked(&self, r: f64) -> f64 {
        1.0 - smooth_step((r - self.r_inner) / (self.r_outer - self.r_inner))
    }

    pub(crate) fn alpha_prime(&self, r: f64) -> f64 {
        let w = self.r_outer - self.r_inner;
        -smooth_step_prime((r - self.r_inner) / w) / w
    }

    /// `d/d|z| β(|z|)`.
    pub(crate) fn beta_prime(&self, z_abs: f64) -> f64 {
        let w = self.z_outer - self.z_inner;
        -smooth_step_prime((z_abs - self.z_inner) / w) / w
    }

    pub(crate) fn gamma_unchecked(&self, t: f64) -> f64 {
        self.s / self.t0 * smooth_step_prime(t / self.t0)
    }

    /// Largest spin-up rate, attained at `t0/2`.
    pub fn gamma_max(&self) -> f64 {
        self.gamma_unchecked(0.5 * self.t0)
    }

    /// Angular velocity `Ω = α β γ` of the swirl at cylindrical `(r, z)`.
    pub fn angular_velocity(&self, r: f64, z: f64, t: f64) -> f64 {
        let g = self.gamma_unchecked(t);
        if g == 0.0 {
            return 0.0;
        }
        g * self.alpha_unchecked(r) * self.beta(z)
    }

    /// `(∂Ω/∂r, ∂Ω/∂z)`.
    pub fn angular_velocity_gradient(&self, r: f64, z: f64, t: f64) -> (f64, f64) {
        let g = self.gamma_unchecked(t);
        if g == 0.0 {
            return (0.0, 0.0);
        }
        let d_r = g * self.alpha_prime(r) * self.beta(z);
        let d_z = g * self.alpha_unchecked(r) * self.beta_prime(z.abs()) * z.signum();
        (d_r, d_z)
    }

    /// Velocity in Cartesian components, `Ω (−y, x, 0)`.
    pub fn velocity(&self, x: &Vec3, t: f64) -> Vec3 {
        let om = self.angular_velocity(x.x.hypot(x.y), x.z, t);
        Vec3::new(-om * x.y, om * x.x, 0.0)
    }

    /// Exact Jacobian `∂u_i/∂x_j` of [`velocity`](Self::velocity).
    pub fn velocity_gradient(&self, x: &Vec3, t: f64) -> Mat3 {
        let r = x.x.hypot(x.y);
        let om = self.angular_velocity(r, x.z, t);
        let (om_r, om_z) = self.angular_velocity_gradient(r, x.z, t);
        let (om_x, om_y) = if om_r != 0.0 && r > 0.0 { (om_r * x.x / r, om_r * x.y / r) } else { (0.0, 0.0) };
        let grad_om = Vec3::new(om_x, om_y, om_z);
        let swirl = Vec3::new(-x.y, x.x, 0.0);
        Mat3::new(0.0, -om, 0.0, om, 0.0, 0.0, 0.0, 0.0, 0.0) + swirl * grad_om.transpose()
    }

    /// Upper bound of `|u|` over all space and time.
    pub fn max_speed(&self) -> f64 {
        self.gamma_max() * self.r_outer
    }
}

/// `h(τ)`: 0 for `τ ≤ 0`, 1 for `τ ≥ 1`, infinitely smooth, `h(1 − τ) = 1 − h(τ)`.
pub fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        let phi = 1.0 / tau - 1.0 / (1.0 - tau);
        1.0 / (1.0 + phi.exp())
    }
}

/// `h'(τ)`; a unit-mass window on `[0, 1]` symmetric about `1/2`, peak value 2.
pub fn smooth_step_prime(tau: f64) -> f64 {
    if tau <= 0.0 || tau >= 1.0 {
        0.0
    } else {
        let phi = 1.0 / tau - 1.0 / (1.0 - tau);
        let c = (0.5 * phi).cosh();
        let dphi = 1.0 / (tau * tau) + 1.0 / ((1.0 - tau) * (1.0 - tau));
        dphi / (4.0 * c * c)
    }
}

/// A uniform cubic grid on `[-half_width, half_width]^3` used for sampling checks.
#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    pub half_width: f64,
    pub n: usize,
}

impl SampleGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }
}

/// Largest central-difference divergence of the velocity over the interior
/// nodes of `grid` at time `t`.
pub fn max_divergence(p: &BumpProfile, grid: SampleGrid, t: f64) -> Result<f64> {
    if grid.n < 3 || grid.half_width <= 0.0 {
        return Err(invalid("sample grid needs n >= 3 and a positive half-width"));
    }
    let n = grid.n;
    let h = grid.spacing();
    let mut u = vec![Vec3::zeros(); n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let x = Vec3::new(grid.coord(i), grid.coord(j), grid.coord(k));
                u[(k * n + j) * n + i] = p.velocity(&x, t);
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize| (k * n + j) * n + i;
    let mut worst = 0.0_f64;
    for k in 1..n - 1 {
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let div = (u[idx(i + 1, j, k)].x - u[idx(i - 1, j, k)].x
                    + u[idx(i, j + 1, k)].y
                    - u[idx(i, j - 1, k)].y
                    + u[idx(i, j, k + 1)].z
                    - u[idx(i, j, k - 1)].z)
                    / (2.0 * h);
                worst = worst.max(div.abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rot_z;
    use std::f64::consts::{PI, TAU};

    fn profile() -> BumpProfile {
        BumpProfile::default_with_angle(TAU)
    }

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, m, fm, whole, tol, 40)
    }

    #[test]
    fn alpha_examples() {
        let p = profile();
        assert_eq!(p.alpha(0.5 * p.r_inner).unwrap(), 1.0);
        assert_eq!(p.alpha(2.0 * p.r_outer).unwrap(), 0.0);
        let mid = 0.5 * (p.r_inner + p.r_outer);
        assert!((p.alpha(mid).unwrap() - 0.5).abs() < 1e-15);
        let off = 0.07;
        let sum = p.alpha(mid - off).unwrap() + p.alpha(mid + off).unwrap();
        assert!((sum - 1.0).abs() < 1e-14);
        assert!(p.alpha(-1e-3).is_err());
    }

    #[test]
    fn alpha_is_monotone_and_derivative_bounded() {
        let p = profile();
        let w = p.r_outer - p.r_inner;
        let mut prev = 1.0;
        for k in 0..=1000 {
            let r = p.r_inner + w * k as f64 / 1000.0;
            let a = p.alpha(r).unwrap();
            assert!(a <= prev + 1e-15 && (0.0..=1.0).contains(&a));
            prev = a;
            // |α'| ≤ 2/(R_o − R_i): the step's peak slope is 2 at its midpoint.
            assert!(p.alpha_prime(r).abs() <= 2.0 / w + 1e-12);
        }
    }

    #[test]
    fn gamma_examples() {
        let p = profile();
        assert_eq!(p.gamma(0.0).unwrap(), 0.0);
        assert_eq!(p.gamma(2.0 * p.t0).unwrap(), 0.0);
        let still = p.with_s(0.0);
        for k in 0..50 {
            assert_eq!(still.gamma(k as f64 * 0.05).unwrap(), 0.0);
        }
        assert!(p.gamma(-0.1).is_err());
    }

    #[test]
    fn gamma_integrates_to_s() {
        let p = profile();
        let f = |t: f64| p.gamma(t).unwrap();
        let total = adaptive_simpson(&f, 0.0, p.t0, 1e-15);
        assert!((total - TAU).abs() <= 1e-12 * TAU, "∫γ = {total}");
        // and the closed form S(t) agrees with quadrature at interior times
        for t in [0.1, 0.37, 0.5, 0.81] {
            let q = adaptive_simpson(&f, 0.0, t, 1e-15);
            assert!((q - p.angle_accumulated(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn accumulated_angle_examples() {
        let p = BumpProfile::default_with_angle(2.0);
        assert_eq!(p.angle_accumulated(0.0), 0.0);
        assert_eq!(p.angle_accumulated(p.t0), 2.0);
        assert_eq!(p.angle_accumulated(3.0 * p.t0), 2.0);
        assert!((p.angle_accumulated(0.5 * p.t0) - 1.0).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..=200 {
            let s = p.angle_accumulated(k as f64 * 0.01);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn velocity_examples() {
        let p = profile();
        let t = 0.3;
        let x = Vec3::new(0.3, -0.4, 0.5);
        let g = p.gamma(t).unwrap();
        assert!((p.velocity(&x, t) - Vec3::new(0.4 * g, 0.3 * g, 0.0)).norm() < 1e-15);
        assert_eq!(p.velocity(&Vec3::new(1.3, 0.2, 0.0), t), Vec3::zeros());
        assert_eq!(p.with_s(0.0).velocity(&x, t), Vec3::zeros());
        assert_eq!(p.velocity(&x, p.t0 + 0.1), Vec3::zeros());
    }

    #[test]
    fn velocity_gradient_examples() {
        let p = profile();
        let t = 0.4;
        let g = p.gamma(t).unwrap();
        let inner = p.velocity_gradient(&Vec3::new(0.2, 0.1, -0.3), t);
        let expect = Mat3::new(0.0, -g, 0.0, g, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((inner - expect).norm() < 1e-14);
        assert_eq!(p.velocity_gradient(&Vec3::new(0.0, 1.5, 0.0), t), Mat3::zeros());
    }

    #[test]
    fn velocity_gradient_matches_finite_differences() {
        let p = profile();
        let h = 1e-5;
        let pts = [
            Vec3::new(1.05, 0.3, 0.2),
            Vec3::new(-0.7, 0.8, 1.1),
            Vec3::new(0.2, -1.0, -1.12),
            Vec3::new(0.9, 0.45, 1.05),
        ];
        for x in pts {
            for t in [0.25, 0.5, 0.77] {
                let an = p.velocity_gradient(&x, t);
                assert!(an.trace().abs() < 1e-13);
                for j in 0..3 {
                    let mut e = Vec3::zeros();
                    e[j] = h;
                    let col = (p.velocity(&(x + e), t) - p.velocity(&(x - e), t)) / (2.0 * h);
                    for i in 0..3 {
                        assert!((an[(i, j)] - col[i]).abs() < 1e-6, "({i},{j}) at {x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn velocity_is_rotation_equivariant() {
        let p = profile();
        let x = Vec3::new(0.8, 0.6, 1.1);
        for theta in [0.3, 1.0, PI, 4.0] {
            let r = rot_z(theta);
            let lhs = p.velocity(&(r * x), 0.4);
            let rhs = r * p.velocity(&x, 0.4);
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }

    #[test]
    fn discrete_divergence_is_second_order() {
        let p = BumpProfile::with_shell(1.0, TAU);
        assert_eq!(max_divergence(&p.with_s(0.0), SampleGrid { half_width: 2.2, n: 17 }, 0.5).unwrap(), 0.0);
        let coarse = max_divergence(&p, SampleGrid { half_width: 2.2, n: 65 }, 0.5).unwrap();
        let fine = max_divergence(&p, SampleGrid { half_width: 2.2, n: 129 }, 0.5).unwrap();
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}, coarse {coarse}, fine {fine}");
    }

    #[test]
    fn profile_validation() {
        assert!(BumpProfile::new(1.0, 0.9, 1.0, 1.2, 1.0, 1.0).is_err());
        assert!(BumpProfile::new(1.0, 1.2, 1.0, 1.2, 0.0, 1.0).is_err());
        assert!(BumpProfile::new(1.0, 1.2, 1.0, 1.2, 1.0, 7.0).is_err());
        assert!(BumpProfile::new(1.0, 1.2, 1.0, 1.2, 1.0, TAU).is_ok());
    }
}
