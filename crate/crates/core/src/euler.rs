//! Closed-form inviscid back-to-coordinates map of the swirl family.
//!
//! Every material point only rotates about the axis, so
//! `A^E(x, t)` rotates the horizontal components of `x` by `−φ(x, t)` with
//! `φ = S(t) α(r) β(|z|)`, keeping `r` and `z`. The Jacobian is the rotation
//! block plus the rank-one shear `(A₂, −A₁, 0)ᵀ ∇φ`, which vanishes inside the
//! core (pure rotation) and outside the outer cylinder (identity).

use serde::Serialize;

use crate::flow::BumpProfile;
use crate::linalg::{Mat3, Vec3};

/// Which branch of the piecewise Jacobian a point falls in.
///
/// Predicates are half-open: `r < R_i` is the core, `R_i ≤ r < R_o` the
/// radial shell, `r ≥ R_o` outside; likewise for `|z|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Inner,
    ShellR,
    ShellZ,
    Corner,
    Outer,
}

impl Region {
    pub fn classify(p: &BumpProfile, r: f64, z: f64) -> Region {
        let za = z.abs();
        if r >= p.r_outer || za >= p.z_outer {
            return Region::Outer;
        }
        match (r < p.r_inner, za < p.z_inner) {
            (true, true) => Region::Inner,
            (false, true) => Region::ShellR,
            (true, false) => Region::ShellZ,
            (false, false) => Region::Corner,
        }
    }
}

/// Image point, Jacobian and region of one evaluation of the Euler map.
#[derive(Debug, Clone, Copy)]
pub struct EulerMapSample {
    pub point: Vec3,
    pub jacobian: Mat3,
    pub region: Region,
}

/// Twist angle `φ = S(t) α(r) β(|z|)`.
fn twist(p: &BumpProfile, r: f64, z: f64, t: f64) -> f64 {
    let big_s = p.angle_accumulated(t);
    if big_s == 0.0 {
        return 0.0;
    }
    big_s * p.alpha_unchecked(r) * p.beta(z)
}

fn rotate_horizontal(x: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * x.x - s * x.y, s * x.x + c * x.y, x.z)
}

/// `A^E(x, t)`: the label of the particle found at `x` at time `t`.
pub fn euler_map(x: &Vec3, t: f64, p: &BumpProfile) -> Vec3 {
    let phi = twist(p, x.x.hypot(x.y), x.z, t);
    rotate_horizontal(x, -phi)
}

/// Exact inverse of [`euler_map`] at fixed `t`. Radius and height are
/// invariants of the map, so the twist can be read off the image point.
pub fn euler_inverse(y: &Vec3, t: f64, p: &BumpProfile) -> Vec3 {
    let phi = twist(p, y.x.hypot(y.y), y.z, t);
    rotate_horizontal(y, phi)
}

/// Jacobian of the horizontal rotation by `−φ`.
fn rotation_block(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Radial shell contribution, the `M₁ + M₂` pair: `(A₂, −A₁, 0)ᵀ ∇φ` with
/// `∇φ = S α'(r) β (x/r, y/r, 0)`.
fn radial_shear(x: &Vec3, phi: f64, dphi_dr: f64) -> Mat3 {
    let r = x.x.hypot(x.y);
    let (s, c) = phi.sin_cos();
    let a1 = x.x * c + x.y * s;
    let a2 = -x.x * s + x.y * c;
    let gx = dphi_dr * x.x / r;
    let gy = dphi_dr * x.y / r;
    Mat3::new(a2 * gx, a2 * gy, 0.0, -a1 * gx, -a1 * gy, 0.0, 0.0, 0.0, 0.0)
}

/// Axial shell contribution: only the third column, `(A₂, −A₁, 0)ᵀ ∂φ/∂z`.
fn axial_shear(x: &Vec3, phi: f64, dphi_dz: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    let a1 = x.x * c + x.y * s;
    let a2 = -x.x * s + x.y * c;
    Mat3::new(0.0, 0.0, a2 * dphi_dz, 0.0, 0.0, -a1 * dphi_dz, 0.0, 0.0, 0.0)
}

/// `∇A^E(x, t)`, dispatched over the five regions.
pub fn euler_jacobian(x: &Vec3, t: f64, p: &BumpProfile) -> Mat3 {
    sample(x, t, p).jacobian
}

/// Map, Jacobian and region tag in one evaluation.
pub fn sample(x: &Vec3, t: f64, p: &BumpProfile) -> EulerMapSample {
    let r = x.x.hypot(x.y);
    let region = Region::classify(p, r, x.z);
    let big_s = p.angle_accumulated(t);
    let point = euler_map(x, t, p);
    let jacobian = match region {
        Region::Outer => Mat3::identity(),
        Region::Inner => rotation_block(big_s),
        Region::ShellR => {
            let phi = big_s * p.alpha_unchecked(r);
            rotation_block(phi) + radial_shear(x, phi, big_s * p.alpha_prime(r))
        }
        Region::ShellZ => {
            let phi = big_s * p.beta(x.z);
            rotation_block(phi) + axial_shear(x, phi, big_s * p.beta_prime(x.z.abs()) * x.z.signum())
        }
        Region::Corner => {
            let (a, b) = (p.alpha_unchecked(r), p.beta(x.z));
            let phi = big_s * a * b;
            rotation_block(phi)
                + radial_shear(x, phi, big_s * p.alpha_prime(r) * b)
                + axial_shear(x, phi, big_s * a * p.beta_prime(x.z.abs()) * x.z.signum())
        }
    };
    EulerMapSample { point, jacobian, region }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rot_z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_point(rng: &mut ChaCha8Rng, extent: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
        )
    }

    /// Five-point central differences; the three-point rule's truncation
    /// error reaches 1e-6 in the thin axial shell at this step.
    fn fd_jacobian(x: &Vec3, t: f64, p: &BumpProfile, h: f64) -> Mat3 {
        let mut m = Mat3::zeros();
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = h;
            let f = |k: f64| euler_map(&(x + e * k), t, p);
            let col = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h);
            m.set_column(j, &col);
        }
        m
    }

    #[test]
    fn outside_and_at_start_is_identity() {
        let p = BumpProfile::default_with_angle(2.0);
        let x = Vec3::new(1.4, 0.3, 0.1);
        assert_eq!(euler_map(&x, 0.7, &p), x);
        assert_eq!(euler_inverse(&x, 0.7, &p), x);
        assert_eq!(euler_jacobian(&x, 0.7, &p), Mat3::identity());
        let y = Vec3::new(0.3, 0.2, 0.1);
        assert_eq!(euler_map(&y, 0.0, &p), y);
        assert_eq!(euler_inverse(&y, 0.0, &p), y);
    }

    #[test]
    fn inner_core_rotates_by_minus_s() {
        let s = 1.3;
        let p = BumpProfile::default_with_angle(s);
        let x = Vec3::new(0.4, -0.2, 0.5);
        let img = euler_map(&x, 2.0, &p);
        assert!((img - rot_z(-s) * x).norm() < 1e-15);
        let jac = euler_jacobian(&x, p.t0, &p);
        let expect = Mat3::new(s.cos(), s.sin(), 0.0, -s.sin(), s.cos(), 0.0, 0.0, 0.0, 1.0);
        assert!((jac - expect).norm() < 1e-15);
        assert_eq!(sample(&x, 1.0, &p).region, Region::Inner);
    }

    #[test]
    fn round_trip_and_unit_determinant() {
        let p = BumpProfile::default_with_angle(TAU);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst_trip = 0.0_f64;
        let mut worst_det = 0.0_f64;
        for _ in 0..10_000 {
            let x = random_point(&mut rng, 1.5);
            let t = rng.random_range(0.0..1.5);
            let back = euler_inverse(&euler_map(&x, t, &p), t, &p);
            worst_trip = worst_trip.max((back - x).norm());
            worst_det = worst_det.max((euler_jacobian(&x, t, &p).determinant() - 1.0).abs());
        }
        assert!(worst_trip <= 1e-12, "round trip {worst_trip}");
        assert!(worst_det <= 1e-12, "det {worst_det}");
    }

    #[test]
    fn jacobian_matches_finite_differences_in_every_region() {
        let p = BumpProfile::default_with_angle(TAU);
        let pts = [
            (Vec3::new(0.3, 0.4, 0.2), Region::Inner),
            (Vec3::new(0.8, 0.7, -0.5), Region::ShellR),
            (Vec3::new(0.2, -0.6, 1.1), Region::ShellZ),
            (Vec3::new(-0.75, 0.7, -1.13), Region::Corner),
            (Vec3::new(1.2, 0.5, 0.0), Region::Outer),
        ];
        for (x, region) in pts {
            for t in [0.3, 0.6, 1.0, 1.7] {
                let s = sample(&x, t, &p);
                assert_eq!(s.region, region);
                let fd = fd_jacobian(&x, t, &p, 1e-5);
                let err = (s.jacobian - fd).abs().max();
                assert!(err < 1e-6, "{region:?} t={t}: {err}");
            }
        }
    }

    #[test]
    fn jacobian_is_equivariant_and_preserves_r_z() {
        let p = BumpProfile::default_with_angle(4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = random_point(&mut rng, 1.4);
            let theta = rng.random_range(0.0..TAU);
            let rt = rot_z(theta);
            let lhs = euler_jacobian(&(rt * x), 0.8, &p);
            let rhs = rt * euler_jacobian(&x, 0.8, &p) * rt.transpose();
            assert!((lhs - rhs).norm() < 1e-11);
            let img = euler_map(&x, 0.8, &p);
            assert!((img.x.hypot(img.y) - x.x.hypot(x.y)).abs() < 1e-14);
            assert_eq!(img.z, x.z);
        }
    }

    #[test]
    fn origin_has_scaled_rotation_form() {
        let p = BumpProfile::default_with_angle(TAU);
        for t in [0.2, 0.5, 0.9] {
            let jac = euler_jacobian(&Vec3::zeros(), t, &p);
            let b = -p.angle_accumulated(t);
            let expect = rot_z(b);
            assert!((jac - expect).norm() < 1e-14);
        }
    }
}
