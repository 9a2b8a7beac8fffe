//! Small fixed-size linear algebra helpers shared by the solvers.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Counter-clockwise rotation about the z-axis.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Generator of rotations about the z-axis, `d/dθ rot_z(θ)` at `θ = 0`.
pub fn rotation_generator() -> Mat3 {
    Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

/// Largest absolute entry.
pub fn max_entry(m: &Mat3) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// The scaled-rotation block `[[Re c, -Im c, 0], [Im c, Re c, 0], [0, 0, 1]]`.
pub fn block_from_complex(c: Complex64) -> Mat3 {
    Mat3::new(c.re, -c.im, 0.0, c.im, c.re, 0.0, 0.0, 0.0, 1.0)
}

/// Largest singular value (spectral norm).
pub fn spectral_norm(m: &Mat3) -> f64 {
    m.singular_values().max()
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &Mat3, b: &Mat3) -> Mat3 {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_composes_and_generator_is_derivative() {
        let a = rot_z(0.3) * rot_z(0.4);
        assert!((a - rot_z(0.7)).norm() < 1e-15);
        let h = 1e-6;
        let fd = (rot_z(h) - rot_z(-h)) / (2.0 * h);
        assert!((fd - rotation_generator()).norm() < 1e-9);
    }

    #[test]
    fn block_norm_is_modulus() {
        let c = Complex64::new(0.3, -0.4);
        let b = block_from_complex(c);
        let top = b.fixed_view::<2, 2>(0, 0).into_owned();
        assert!((top.singular_values().max() - 0.5).abs() < 1e-14);
        assert_eq!(max_entry(&b), 1.0);
    }
}
