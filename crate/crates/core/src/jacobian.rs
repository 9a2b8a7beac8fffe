//! Structure of `∇A(0, t)` and its late-time heat-kernel representation.
//!
//! For an axisymmetric map the Jacobian at the origin is a scaled rotation in
//! the horizontal plane, `a R(b) ⊕ 1`. Once the swirl stops (`t ≥ t0`) the
//! displacement obeys the heat equation, so
//!
//! `∇A(0, t) − I = ∫ G_τ(p) (∇A − I)(p, t0) dp`,  `τ = t − t0`,
//!
//! with the normalized kernel `G_τ = (4πντ)^{-3/2} exp(−|p|²/(4ντ))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::euler::{euler_jacobian, Region};
use crate::flow::BumpProfile;
use crate::lagrangian::{DisplacementField, ReducedState};
use crate::linalg::{block_from_complex, max_entry, Mat3, Vec3};

pub use crate::lagrangian::hessian_origin;

/// Rotation–scale form `a R(b) ⊕ 1` of a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianDecomposition {
    pub a: f64,
    /// Angle in `[0, 2π)`; 0 when `a < 1e-12`.
    pub b: f64,
    /// Max-entry distance between the input and the reconstruction.
    pub residual: f64,
    pub time: f64,
    pub s: f64,
}

impl JacobianDecomposition {
    pub fn reconstruct(&self) -> Mat3 {
        let (sn, cs) = self.b.sin_cos();
        Mat3::new(self.a * cs, -self.a * sn, 0.0, self.a * sn, self.a * cs, 0.0, 0.0, 0.0, 1.0)
    }

    /// The planar point `F = (a cos b, a sin b)`.
    pub fn f(&self) -> (f64, f64) {
        let (sn, cs) = self.b.sin_cos();
        (self.a * cs, self.a * sn)
    }
}

/// Decompose `m` without time/angle metadata.
pub fn decompose(m: &Mat3) -> JacobianDecomposition {
    decompose_at(m, 0.0, 0.0)
}

/// Decompose `m`, tagging the result with the time and rotation angle.
pub fn decompose_at(m: &Mat3, time: f64, s: f64) -> JacobianDecomposition {
    let a = m[(0, 0)].hypot(m[(1, 0)]);
    let b = if a < 1e-12 { 0.0 } else { m[(1, 0)].atan2(m[(0, 0)]).rem_euclid(2.0 * PI) };
    // rem_euclid can round up to exactly 2π
    let b = if b >= 2.0 * PI { 0.0 } else { b };
    let mut d = JacobianDecomposition { a, b, residual: 0.0, time, s };
    d.residual = max_entry(&(m - d.reconstruct()));
    d
}

/// Decomposition of the block encoded by `c = ∂w/∂r(0)`.
pub fn decompose_complex(c: Complex64, time: f64, s: f64) -> JacobianDecomposition {
    decompose_at(&block_from_complex(c), time, s)
}

/// Cauchy–Riemann-type defect `max(|∂ₓFₓ − ∂ᵧFᵧ|, |∂ᵧFₓ + ∂ₓFᵧ|)` at the
/// origin, by fourth-order central differences with step `h`.
pub fn axisym_identity_check(field: impl Fn(f64, f64) -> (f64, f64), h: f64) -> f64 {
    let d = |dx: f64, dy: f64| {
        let p = |k: f64| field(k * dx, k * dy);
        let (a2, a1, m1, m2) = (p(2.0), p(1.0), p(-1.0), p(-2.0));
        let comb = |f: fn(&(f64, f64)) -> f64| (-f(&a2) + 8.0 * f(&a1) - 8.0 * f(&m1) + f(&m2)) / (12.0 * h);
        (comb(|v| v.0), comb(|v| v.1))
    };
    let (fx_x, fy_x) = d(h, 0.0);
    let (fx_y, fy_y) = d(0.0, h);
    (fx_x - fy_y).abs().max((fx_y + fy_x).abs())
}

/// The horizontal components of the 3D solver's map as a planar sampler at
/// height `z = 0` (nodes only; `x`, `y` must be node offsets from the origin).
pub fn planar_map_sampler(d: &DisplacementField) -> Result<impl Fn(f64, f64) -> (f64, f64) + '_> {
    let g = d.grid;
    let o = g.origin_index().ok_or_else(|| Error::Domain("origin is not a node".into()))?;
    let h = g.spacing();
    Ok(move |x: f64, y: f64| {
        let i = (o as f64 + x / h).round() as usize;
        let j = (o as f64 + y / h).round() as usize;
        let v = d.at(i, j, o);
        (x + v.x, y + v.y)
    })
}

/// Standard heat kernel in 3D.
pub fn heat_kernel(nu: f64, tau: f64, dist2: f64) -> f64 {
    (4.0 * PI * nu * tau).powf(-1.5) * (-dist2 / (4.0 * nu * tau)).exp()
}

fn check_tail_time(nu: f64, tau: f64) -> Result<()> {
    if !(nu > 0.0) {
        return Err(invalid("the heat-kernel representation needs a positive viscosity"));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("heat tail needs t > t0, got t − t0 = {tau}")));
    }
    Ok(())
}

/// Result of a heat-kernel quadrature at the origin.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HeatTail {
    /// `I + ∫ G (∇A − I)`.
    pub value: Mat3,
    /// Fewer than 4 grid spacings per kernel standard deviation.
    pub under_resolved: bool,
    /// Largest integrand magnitude on the outermost grid layer.
    pub edge_max: f64,
}

/// 3D trapezoidal heat-kernel quadrature over the cube `[−L, L]^3` with `n`
/// nodes per axis of an arbitrary sampler of `∇A − I` at time `t0`.
pub fn heat_tail_from_sampler(
    half_width: f64,
    n: usize,
    nu: f64,
    tau: f64,
    sampler: impl Fn(&Vec3) -> Mat3 + Sync,
) -> Result<HeatTail> {
    check_tail_time(nu, tau)?;
    if n < 3 {
        return Err(invalid("quadrature grid needs at least 3 nodes per axis"));
    }
    let h = 2.0 * half_width / (n - 1) as f64;
    let coord = |i: usize| (i as f64 - 0.5 * (n - 1) as f64) * h;
    let sigma = (2.0 * nu * tau).sqrt();
    let (sum, edge) = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut acc = Mat3::zeros();
            let mut edge = 0.0_f64;
            let wk = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            for j in 0..n {
                let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                for i in 0..n {
                    let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    let p = Vec3::new(coord(i), coord(j), coord(k));
                    let v = sampler(&p);
                    if wi * wj * wk < 1.0 {
                        edge = edge.max(max_entry(&v));
                    }
                    let gk = heat_kernel(nu, tau, p.norm_squared());
                    if gk > 0.0 {
                        acc += v * (wi * wj * wk * gk);
                    }
                }
            }
            (acc, edge)
        })
        .reduce(|| (Mat3::zeros(), 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    Ok(HeatTail { value: Mat3::identity() + sum * h.powi(3), under_resolved: sigma < 4.0 * h, edge_max: edge })
}

/// Heat-kernel quadrature on the 3D solver's snapshot grid (central
/// differences for `∇D`; the outermost layer counts as zero).
pub fn heat_tail_gradient(snapshot: &DisplacementField, nu: f64, tau: f64) -> Result<HeatTail> {
    check_tail_time(nu, tau)?;
    let g = snapshot.grid;
    let n = g.n;
    let h = g.spacing();
    let sigma = (2.0 * nu * tau).sqrt();
    let mut acc = Mat3::zeros();
    let mut edge = 0.0_f64;
    for k in 1..n - 1 {
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let v = snapshot.jacobian_at(i, j, k) - Mat3::identity();
                if i == 1 || j == 1 || k == 1 || i == n - 2 || j == n - 2 || k == n - 2 {
                    edge = edge.max(max_entry(&v));
                }
                let p = Vec3::new(g.coord(i), g.coord(j), g.coord(k));
                acc += v * heat_kernel(nu, tau, p.norm_squared());
            }
        }
    }
    Ok(HeatTail { value: Mat3::identity() + acc * h.powi(3), under_resolved: sigma < 4.0 * h, edge_max: edge })
}

/// Local-frame `∇A` of a reduced state at every node, row-major per node.
pub fn local_jacobians(st: &ReducedState) -> Vec<Mat3> {
    let g = &st.grid;
    let (nr, nz) = (g.n_r, g.n_z);
    let (hr, hz) = (g.h_r(), g.h_z());
    let iu = Complex64::new(0.0, 1.0);
    let mut out = vec![Mat3::identity(); nr * nz];
    for j in 1..nz - 1 {
        for i in 0..nr - 1 {
            let c = j * nr + i;
            let (w_r, w_over_r, w_z) = if i == 0 {
                let v = st.w_r_axis(j);
                (v, v, Complex64::new(0.0, 0.0))
            } else {
                let r = g.r(i);
                ((st.w(i + 1, j) - st.w(i - 1, j)) / (2.0 * hr), st.w(i, j) / r, (st.d[c + nr] - st.d[c - nr]) / (2.0 * hz))
            };
            let y = iu * w_over_r;
            out[c] = Mat3::new(w_r.re, y.re, w_z.re, w_r.im, y.im, w_z.im, 0.0, 0.0, 1.0);
        }
    }
    out
}

/// Bilinear sampler of `∇A − I` in 3D built from a reduced state.
pub struct LiftedGradient {
    grid: crate::lagrangian::ReducedGrid,
    local: Vec<Mat3>,
}

impl LiftedGradient {
    pub fn new(st: &ReducedState) -> Self {
        Self { grid: st.grid, local: local_jacobians(st) }
    }

    /// `∇A(x) − I`; zero outside the reduced grid.
    pub fn sample(&self, x: &Vec3) -> Mat3 {
        let g = &self.grid;
        let r = x.x.hypot(x.y);
        let fr = r / g.h_r();
        let fz = (x.z + g.half_width) / g.h_z();
        if fr >= (g.n_r - 1) as f64 || fz < 0.0 || fz >= (g.n_z - 1) as f64 {
            return Mat3::zeros();
        }
        let (i, j) = (fr as usize, fz as usize);
        let (a, b) = (fr - i as f64, fz - j as f64);
        let nr = g.n_r;
        let c = j * nr + i;
        let local = self.local[c] * ((1.0 - a) * (1.0 - b))
            + self.local[c + 1] * (a * (1.0 - b))
            + self.local[c + nr] * ((1.0 - a) * b)
            + self.local[c + nr + 1] * (a * b);
        let rot = if r > 0.0 {
            crate::linalg::rot_z(x.y.atan2(x.x))
        } else {
            Mat3::identity()
        };
        rot * local * rot.transpose() - Mat3::identity()
    }
}

/// `c(t) = ∂w/∂r(0, t)` for `t > t0` from the state at `t0`, using the exact
/// angular integration of the heat kernel:
/// `c − 1 = π/(2ντ) ∫∫ G_τ(r, z) r² d(r, z) dr dz`.
pub fn reduced_heat_tail(st: &ReducedState, nu: f64, tau: f64) -> Result<Complex64> {
    check_tail_time(nu, tau)?;
    let g = &st.grid;
    let (nr, nz) = (g.n_r, g.n_z);
    let (hr, hz) = (g.h_r(), g.h_z());
    let pref = PI / (2.0 * nu * tau) * hr * hz;
    let four = 4.0 * nu * tau;
    let norm = (PI * four).powf(-1.5);
    let radial: Vec<f64> = (0..nr).map(|i| (-g.r(i).powi(2) / four).exp() * g.r(i).powi(2)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 1..nz - 1 {
        let gz = (-g.z(j).powi(2) / four).exp();
        if gz == 0.0 {
            continue;
        }
        let row = &st.d[j * nr..(j + 1) * nr];
        let mut line = Complex64::new(0.0, 0.0);
        for i in 1..nr - 1 {
            line += row[i] * radial[i];
        }
        acc += line * gz;
    }
    Ok(Complex64::new(1.0, 0.0) + acc * (pref * norm))
}

/// Heat-kernel representation evaluated on the reduced grid: the angular
/// integral of `R_θ M R_θᵀ` keeps only the order-0 part of `M`, so
/// `∫ G (∇A − I) = 2π ∫∫ G r [c_loc − 1] dr dz` with
/// `c_loc = (∂ᵣw + w/r)/2` embedded as a horizontal block.
fn order_zero_block(m: &Mat3) -> Complex64 {
    Complex64::new(0.5 * (m[(0, 0)] + m[(1, 1)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

fn block_only(c: Complex64) -> Mat3 {
    Mat3::new(c.re, -c.im, 0.0, c.im, c.re, 0.0, 0.0, 0.0, 0.0)
}

/// `(I₁, …, I₅)` together with the total they partition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegionIntegrals {
    /// Viscous correction `∫ G (∇A − ∇A^E)`.
    pub i1: Mat3,
    /// Inner cylinder.
    pub i2: Mat3,
    /// Radial shell at heights `|z| < Z_i`.
    pub i3: Mat3,
    /// Rest of the outer cylinder.
    pub i4: Mat3,
    /// Complement of the outer cylinder.
    pub i5: Mat3,
    /// `I + ∫ G (∇A − I)` on the same quadrature nodes.
    pub total: Mat3,
}

impl RegionIntegrals {
    pub fn max_entries(&self) -> [f64; 5] {
        [self.i1, self.i2, self.i3, self.i4, self.i5].map(|m| max_entry(&m))
    }

    /// `max |I + ΣI_k − total|`.
    pub fn partition_defect(&self) -> f64 {
        max_entry(&(Mat3::identity() + self.i1 + self.i2 + self.i3 + self.i4 + self.i5 - self.total))
    }
}

/// Local `c_E = (∂ᵣw^E + w^E/r)/2 = e^{−iφ}(1 − i r ∂ᵣφ / 2)` of the Euler map.
fn euler_order_zero(p: &BumpProfile, r: f64, z: f64, t: f64) -> Complex64 {
    let s = p.angle_accumulated(t);
    let beta = p.beta(z);
    let phi = s * p.alpha_unchecked(r) * beta;
    let phi_r = s * p.alpha_prime(r) * beta;
    Complex64::from_polar(1.0, -phi) * Complex64::new(1.0, -0.5 * r * phi_r)
}

fn region_slot(p: &BumpProfile, r: f64, z: f64) -> usize {
    match Region::classify(p, r, z) {
        Region::Inner => 1,
        Region::ShellR => 2,
        Region::ShellZ | Region::Corner => 3,
        Region::Outer => 4,
    }
}

/// Region split of the heat-kernel integral at `t = st.time + tau`, using the
/// nodes of the reduced snapshot (trapezoid in `r` and `z`). The Euler part
/// is evaluated analytically at the same nodes, so the five pieces partition
/// the total up to roundoff.
pub fn region_integrals(st: &ReducedState, p: &BumpProfile, nu: f64, tau: f64) -> Result<RegionIntegrals> {
    check_tail_time(nu, tau)?;
    let g = &st.grid;
    let (nr, nz) = (g.n_r, g.n_z);
    let (hr, hz) = (g.h_r(), g.h_z());
    let local = local_jacobians(st);
    let t0 = st.time;
    let mut parts = [Complex64::new(0.0, 0.0); 5];
    let mut total = Complex64::new(0.0, 0.0);
    let norm = (4.0 * PI * nu * tau).powf(-1.5);
    for j in 1..nz - 1 {
        let z = g.z(j);
        for i in 1..nr - 1 {
            let r = g.r(i);
            let weight = 2.0 * PI * r * hr * hz * norm * (-(r * r + z * z) / (4.0 * nu * tau)).exp();
            if weight == 0.0 {
                continue;
            }
            let c_n = order_zero_block(&local[j * nr + i]);
            let c_e = euler_order_zero(p, r, z, t0);
            let one = Complex64::new(1.0, 0.0);
            total += (c_n - one) * weight;
            parts[0] += (c_n - c_e) * weight;
            parts[region_slot(p, r, z)] += (c_e - one) * weight;
        }
    }
    let m = parts.map(block_only);
    Ok(RegionIntegrals {
        i1: m[0],
        i2: m[1],
        i3: m[2],
        i4: m[3],
        i5: m[4],
        total: Mat3::identity() + block_only(total),
    })
}

/// Euler parts `I₂ … I₅` by Gauss–Legendre quadrature on each region
/// (independent of any snapshot grid). `nodes` is the per-interval order;
/// every region is subdivided into `panels` panels per direction.
pub fn euler_region_integrals(p: &BumpProfile, nu: f64, t0: f64, tau: f64, panels: usize) -> Result<[Mat3; 4]> {
    check_tail_time(nu, tau)?;
    let cutoff = p.outer_extent() + 12.0 * (2.0 * nu * tau).sqrt();
    let rs = [0.0, p.r_inner, p.r_outer, cutoff.max(p.r_outer * 1.5)];
    let zs = [0.0, p.z_inner, p.z_outer, cutoff.max(p.z_outer * 1.5)];
    let (gx, gw) = gauss_legendre_8();
    let norm = (4.0 * PI * nu * tau).powf(-1.5);
    let mut parts = [Complex64::new(0.0, 0.0); 4];
    for a in 0..3 {
        for b in 0..3 {
            let (r0, r1) = (rs[a], rs[a + 1]);
            let (z0, z1) = (zs[b], zs[b + 1]);
            let slot = region_slot(p, 0.5 * (r0 + r1), 0.5 * (z0 + z1)) - 1;
            let (dr, dz) = ((r1 - r0) / panels as f64, (z1 - z0) / panels as f64);
            let mut acc = Complex64::new(0.0, 0.0);
            for pr in 0..panels {
                for pz in 0..panels {
                    for (xr, wr) in gx.iter().zip(&gw) {
                        let r = r0 + dr * (pr as f64 + 0.5 * (xr + 1.0));
                        for (xz, wz) in gx.iter().zip(&gw) {
                            let z = z0 + dz * (pz as f64 + 0.5 * (xz + 1.0));
                            let k = norm * (-(r * r + z * z) / (4.0 * nu * tau)).exp();
                            // both signs of z
                            acc += (euler_order_zero(p, r, z, t0) - 1.0) * (2.0 * 2.0 * PI * r * k * wr * wz * 0.25 * dr * dz);
                        }
                    }
                }
            }
            parts[slot] += acc;
        }
    }
    Ok(parts.map(block_only))
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_2,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    let w = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (x, w)
}

/// One CSV row of the origin diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JacobianRow {
    pub t: f64,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub residual: f64,
    #[serde(rename = "Fx")]
    pub fx: f64,
    #[serde(rename = "Fy")]
    pub fy: f64,
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
}

impl JacobianRow {
    pub fn new(d: &JacobianDecomposition, regions: Option<&RegionIntegrals>) -> Self {
        let (fx, fy) = d.f();
        let i = regions.map_or([f64::NAN; 5], RegionIntegrals::max_entries);
        Self { t: d.time, s: d.s, a: d.a, b: d.b, residual: d.residual, fx, fy, i1: i[0], i2: i[1], i3: i[2], i4: i[3], i5: i[4] }
    }
}

/// Inner-core Euler Jacobian at the origin, used as a reference in tests and reports.
pub fn euler_origin(p: &BumpProfile, t: f64) -> JacobianDecomposition {
    decompose_at(&euler_jacobian(&Vec3::zeros(), t, p), t, p.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{solve_reduced, ReducedGrid};
    use crate::linalg::rot_z;

    #[test]
    fn decompose_examples() {
        let d = decompose(&Mat3::identity());
        assert_eq!((d.a, d.b, d.residual), (1.0, 0.0, 0.0));
        let s = 2.3;
        let d = euler_origin(&BumpProfile::default_with_angle(s), 5.0);
        assert!((d.a - 1.0).abs() < 1e-15);
        assert!((d.b - (2.0 * PI - s)).abs() < 1e-14);
        assert!(d.residual < 1e-15);
        let d = decompose(&Mat3::zeros());
        assert_eq!((d.a, d.b, d.residual), (0.0, 0.0, 1.0));
    }

    #[test]
    fn residual_sees_structure_violations() {
        let mut m = rot_z(0.4) * 0.7;
        m[(2, 2)] = 1.0;
        assert!(decompose(&m).residual < 1e-15);
        m[(0, 2)] = 0.25;
        assert!((decompose(&m).residual - 0.25).abs() < 1e-15);
        m[(0, 2)] = 0.0;
        m[(0, 1)] += 0.1;
        assert!((decompose(&m).residual - 0.1).abs() < 1e-14);
    }

    #[test]
    fn identity_check_examples() {
        assert!(axisym_identity_check(|x, y| (-y, x), 1e-3) < 1e-12);
        assert!(axisym_identity_check(|x, y| (x, y), 1e-3) < 1e-12);
        assert!(axisym_identity_check(|x, y| (x, -y), 1e-3) > 1.0);
    }

    #[test]
    fn zero_snapshot_maps_to_identity() {
        let t = heat_tail_from_sampler(1.0, 11, 0.1, 1.0, |_| Mat3::zeros()).unwrap();
        assert_eq!(t.value, Mat3::identity());
        assert!(heat_tail_from_sampler(1.0, 11, 0.1, 0.0, |_| Mat3::zeros()).is_err());
        assert!(heat_tail_from_sampler(1.0, 11, 0.1, -1.0, |_| Mat3::zeros()).is_err());
    }

    #[test]
    fn kernel_has_unit_mass_on_a_fine_grid() {
        let t = heat_tail_from_sampler(2.5, 101, 0.05, 1.0, |_| Mat3::identity()).unwrap();
        // I + ∫ G I = 2 I
        assert!((t.value - 2.0 * Mat3::identity()).norm() < 1e-9, "{}", t.value);
        assert!(!t.under_resolved);
        assert!(heat_tail_from_sampler(2.0, 11, 0.05, 1.0, |_| Mat3::identity()).unwrap().under_resolved);
    }

    #[test]
    fn reduced_tail_matches_projected_quadrature() {
        // the angular reduction and the integration by parts agree
        let p = BumpProfile::default_with_angle(PI);
        let g = ReducedGrid::split(&p, 2.5, 161, 0.05);
        let (st, _) = solve_reduced(&p, g, p.t0, &[], |_| {}).unwrap();
        for tau in [0.5, 1.0, 3.0] {
            let c = reduced_heat_tail(&st, 0.05, tau).unwrap();
            let parts = region_integrals(&st, &p, 0.05, tau).unwrap();
            let via_regions = order_zero_block(&parts.total);
            assert!((c - via_regions).norm() < 1e-3 * (c - 1.0).norm().max(1e-6), "{c} {via_regions}");
            assert!(parts.partition_defect() < 1e-12);
        }
    }

    #[test]
    fn full_turn_has_empty_core_and_outside_parts() {
        let p = BumpProfile::default_with_angle(2.0 * PI);
        let g = ReducedGrid::split(&p, 2.5, 81, 0.02);
        let (st, _) = solve_reduced(&p, g, p.t0, &[], |_| {}).unwrap();
        let parts = region_integrals(&st, &p, 0.02, 1.0).unwrap();
        assert!(max_entry(&parts.i2) < 1e-10);
        assert!(max_entry(&parts.i5) < 1e-10);
        let analytic = euler_region_integrals(&p, 0.02, p.t0, 1.0, 4).unwrap();
        assert!(max_entry(&analytic[0]) < 1e-10);
        assert!(max_entry(&analytic[3]) < 1e-10);
    }
}
