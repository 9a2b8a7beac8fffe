//! Velocity samplers, initial magnetizations and their Clebsch form.

use std::fmt;
use std::sync::Arc;

use crate::flow::BumpProfile;
use crate::linalg::{Mat3, Vec3};

/// A time-dependent velocity field with its spatial Jacobian `∂u_a/∂x_b`.
pub trait VelocityField: Sync {
    fn velocity(&self, x: &Vec3, t: f64) -> Vec3;
    fn gradient(&self, x: &Vec3, t: f64) -> Mat3;
    /// Upper bound of `|u|` on `[-L, L]^3` over all times.
    fn speed_bound(&self, half_width: f64) -> f64;
    /// `Some(t_ref)` when `u(x, t) = f(t)/f(t_ref) · u(x, t_ref)` with
    /// `f =` [`time_factor`](Self::time_factor) and `f(t_ref) ≠ 0`.
    fn reference_time(&self) -> Option<f64> {
        None
    }
    fn time_factor(&self, _t: f64) -> f64 {
        1.0
    }
}

impl VelocityField for BumpProfile {
    fn velocity(&self, x: &Vec3, t: f64) -> Vec3 {
        BumpProfile::velocity(self, x, t)
    }

    fn gradient(&self, x: &Vec3, t: f64) -> Mat3 {
        self.velocity_gradient(x, t)
    }

    fn speed_bound(&self, _half_width: f64) -> f64 {
        self.max_speed()
    }

    fn reference_time(&self) -> Option<f64> {
        (self.s != 0.0).then_some(0.5 * self.t0)
    }

    fn time_factor(&self, t: f64) -> f64 {
        self.gamma_unchecked(t)
    }
}

/// `u ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVelocity(pub Vec3);

impl VelocityField for ConstantVelocity {
    fn velocity(&self, _x: &Vec3, _t: f64) -> Vec3 {
        self.0
    }

    fn gradient(&self, _x: &Vec3, _t: f64) -> Mat3 {
        Mat3::zeros()
    }

    fn speed_bound(&self, _half_width: f64) -> f64 {
        self.0.norm()
    }
}

/// `u = M x` (steady).
#[derive(Debug, Clone, Copy)]
pub struct LinearVelocity(pub Mat3);

impl VelocityField for LinearVelocity {
    fn velocity(&self, x: &Vec3, _t: f64) -> Vec3 {
        self.0 * x
    }

    fn gradient(&self, _x: &Vec3, _t: f64) -> Mat3 {
        self.0
    }

    fn speed_bound(&self, half_width: f64) -> f64 {
        self.0.norm() * half_width * 3f64.sqrt()
    }
}

/// A smooth vector field of space only, with its Jacobian.
pub trait VectorSampler: Send + Sync {
    fn value(&self, x: &Vec3) -> Vec3;
    fn jacobian(&self, x: &Vec3) -> Mat3;
}

/// A smooth scalar field with its gradient.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vec3) -> f64;
    fn gradient(&self, x: &Vec3) -> Vec3;
}

/// `x ↦ x_i`.
#[derive(Debug, Clone, Copy)]
pub struct Coordinate(pub usize);

impl ScalarField for Coordinate {
    fn value(&self, x: &Vec3) -> f64 {
        x[self.0]
    }

    fn gradient(&self, _x: &Vec3) -> Vec3 {
        let mut g = Vec3::zeros();
        g[self.0] = 1.0;
        g
    }
}

/// One Cartesian component of a vector field.
#[derive(Clone)]
pub struct Component {
    pub field: Arc<dyn VectorSampler>,
    pub index: usize,
}

impl ScalarField for Component {
    fn value(&self, x: &Vec3) -> f64 {
        self.field.value(x)[self.index]
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        self.field.jacobian(x).row(self.index).transpose()
    }
}

/// Standard bump `exp(1 − 1/(1 − q²))` on `q < 1`, with `φ(0) = 1`.
fn bump(q2: f64) -> (f64, f64) {
    if q2 >= 1.0 {
        return (0.0, 0.0);
    }
    let w = 1.0 - q2;
    let phi = (1.0 - 1.0 / w).exp();
    // dφ/d(q²)
    (phi, -phi / (w * w))
}

/// Compactly supported smooth field
/// `φ(|x − c|/ρ) · (a + κ e_z × (x − c))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: [f64; 3],
    pub twist: f64,
}

impl Blob {
    fn parts(&self, x: &Vec3) -> (Vec3, f64, Vec3) {
        let d = x - Vec3::from(self.center);
        let (phi, dphi) = bump(d.norm_squared() / (self.radius * self.radius));
        let grad_phi = d * (2.0 * dphi / (self.radius * self.radius));
        (d, phi, grad_phi)
    }

    fn carrier(&self, d: &Vec3) -> Vec3 {
        Vec3::from(self.amplitude) + self.twist * Vec3::new(-d.y, d.x, 0.0)
    }
}

impl VectorSampler for Blob {
    fn value(&self, x: &Vec3) -> Vec3 {
        let (d, phi, _) = self.parts(x);
        phi * self.carrier(&d)
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        let (d, phi, grad_phi) = self.parts(x);
        let k = self.twist * crate::linalg::rotation_generator();
        self.carrier(&d) * grad_phi.transpose() + phi * k
    }
}

/// Velocity of the swirl family frozen at one time, as an initial field.
#[derive(Debug, Clone, Copy)]
pub struct FrozenSwirl {
    pub profile: BumpProfile,
    pub time: f64,
}

impl VectorSampler for FrozenSwirl {
    fn value(&self, x: &Vec3) -> Vec3 {
        self.profile.velocity(x, self.time)
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.profile.velocity_gradient(x, self.time)
    }
}

/// Initial magnetization written as `m₀ = Σ βᵢ ∇αᵢ`.
#[derive(Clone)]
pub struct ClebschData {
    pub alpha: Vec<Arc<dyn ScalarField>>,
    pub beta: Vec<Arc<dyn ScalarField>>,
}

impl fmt::Debug for ClebschData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClebschData").field("r", &self.alpha.len()).finish()
    }
}

impl ClebschData {
    /// `αᵢ = xᵢ`, `βᵢ = m₀ᵢ`, so that `Σ βᵢ ∇αᵢ = m₀` with `R = 3`.
    pub fn coordinates(m0: Arc<dyn VectorSampler>) -> Self {
        Self {
            alpha: (0..3).map(|i| Arc::new(Coordinate(i)) as Arc<dyn ScalarField>).collect(),
            beta: (0..3).map(|i| Arc::new(Component { field: m0.clone(), index: i }) as Arc<dyn ScalarField>).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.alpha.len()
    }

    /// `Σ βᵢ(y) ∇αᵢ(y)`.
    pub fn m0(&self, y: &Vec3) -> Vec3 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| b.value(y) * a.gradient(y)).sum()
    }

    /// Largest deviation from a reference `m₀` over the probe points.
    pub fn reproduction_error(&self, reference: &dyn VectorSampler, probes: &[Vec3]) -> f64 {
        probes.iter().map(|y| (self.m0(y) - reference.value(y)).norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(f: &dyn VectorSampler, x: &Vec3) -> Mat3 {
        let h = 1e-5;
        let mut m = Mat3::zeros();
        for b in 0..3 {
            let mut e = Vec3::zeros();
            e[b] = h;
            let col = (f.value(&(x + e)) - f.value(&(x - e))) / (2.0 * h);
            m.set_column(b, &col);
        }
        m
    }

    #[test]
    fn blob_jacobian_matches_differences() {
        let b = Blob { center: [0.2, -0.1, 0.3], radius: 1.3, amplitude: [0.5, -0.2, 0.8], twist: 0.7 };
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.6, 0.4, 0.9), Vec3::new(0.9, 0.1, -0.2)] {
            let err = (b.jacobian(&x) - fd_jacobian(&b, &x)).amax();
            assert!(err < 1e-8, "{err}");
        }
        assert_eq!(b.value(&Vec3::new(3.0, 0.0, 0.0)), Vec3::zeros());
    }

    #[test]
    fn coordinate_clebsch_reproduces_m0() {
        let b: Arc<dyn VectorSampler> =
            Arc::new(Blob { center: [0.0; 3], radius: 1.0, amplitude: [1.0, 2.0, 3.0], twist: 0.5 });
        let c = ClebschData::coordinates(b.clone());
        let probes = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.5, 0.1, 0.2)];
        assert!(c.reproduction_error(b.as_ref(), &probes) < 1e-15);
        assert_eq!(c.rank(), 3);
    }
}
