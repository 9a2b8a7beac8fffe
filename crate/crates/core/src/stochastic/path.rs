//! Discretized three-dimensional Brownian paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linalg::Vec3;

/// A Brownian motion started at the origin, sampled every `dt` and linearly
/// interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    /// i.i.d. `N(0, dt)` per component.
    pub increments: Vec<Vec3>,
    pub seed: u64,
    pub stream: u64,
    /// Partial sums, `positions[k] = b(k dt)`.
    positions: Vec<Vec3>,
}

impl BrownianPath {
    /// Path `stream` of the family keyed by `seed`. Each stream is an
    /// independent ChaCha8 sequence, so paths can be generated in any order.
    pub fn generate(seed: u64, stream: u64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(invalid(format!("path needs dt > 0 and at least one step, got dt = {dt}, steps = {steps}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sd = dt.sqrt();
        let increments: Vec<Vec3> = (0..steps)
            .map(|_| {
                let mut v = [0.0; 3];
                for c in &mut v {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = sd * z;
                }
                Vec3::from(v)
            })
            .collect();
        Ok(Self::from_increments(dt, increments, seed, stream))
    }

    pub fn from_increments(dt: f64, increments: Vec<Vec3>, seed: u64, stream: u64) -> Self {
        let mut positions = Vec::with_capacity(increments.len() + 1);
        let mut b = Vec3::zeros();
        positions.push(b);
        for inc in &increments {
            b += inc;
            positions.push(b);
        }
        Self { dt, increments, seed, stream, positions }
    }

    /// The zero path, used when the shift scale vanishes.
    pub fn still(dt: f64, steps: usize) -> Self {
        Self::from_increments(dt, vec![Vec3::zeros(); steps], 0, 0)
    }

    /// The mirrored path `−b`.
    pub fn negated(&self) -> Self {
        Self::from_increments(self.dt, self.increments.iter().map(|v| -v).collect(), self.seed, self.stream)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    /// `b(τ)` for `0 ≤ τ ≤ horizon`.
    pub fn position(&self, tau: f64) -> Result<Vec3> {
        let horizon = self.horizon();
        if !(tau >= 0.0 && tau <= horizon * (1.0 + 1e-12)) {
            return Err(invalid(format!("time {tau} lies outside the path horizon [0, {horizon}]")));
        }
        let x = (tau / self.dt).min(self.increments.len() as f64);
        let k = (x.floor() as usize).min(self.increments.len() - 1);
        let frac = x - k as f64;
        Ok(self.positions[k] + frac * self.increments[k])
    }
}

/// Moment sanity check over a batch: every component's increment mean and
/// variance lie within 5 standard errors of `0` and `dt`.
pub fn moments_plausible(paths: &[BrownianPath]) -> bool {
    let Some(first) = paths.first() else { return true };
    let dt = first.dt;
    let mut n = 0.0;
    let mut sum = Vec3::zeros();
    let mut sq = Vec3::zeros();
    for p in paths {
        for inc in &p.increments {
            n += 1.0;
            sum += inc;
            sq += inc.component_mul(inc);
        }
    }
    if n < 2.0 {
        return true;
    }
    (0..3).all(|c| {
        let mean = sum[c] / n;
        let var = sq[c] / n;
        // Var of a N(0, dt) sample mean is dt/n, of its square 2 dt²/n.
        mean.abs() <= 5.0 * (dt / n).sqrt() && (var - dt).abs() <= 5.0 * (2.0 * dt * dt / n).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = BrownianPath::generate(7, 3, 0.01, 50).unwrap();
        let b = BrownianPath::generate(7, 3, 0.01, 50).unwrap();
        let c = BrownianPath::generate(7, 4, 0.01, 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn increments_have_brownian_moments() {
        let paths: Vec<_> = (0..200).map(|k| BrownianPath::generate(11, k, 0.02, 64).unwrap()).collect();
        assert!(moments_plausible(&paths));
        let scaled: Vec<_> = paths
            .iter()
            .map(|p| BrownianPath::from_increments(p.dt, p.increments.iter().map(|v| 1.5 * v).collect(), 0, 0))
            .collect();
        assert!(!moments_plausible(&scaled));
    }

    #[test]
    fn position_interpolates_partial_sums() {
        let p = BrownianPath::generate(1, 0, 0.1, 10).unwrap();
        assert_eq!(p.position(0.0).unwrap(), Vec3::zeros());
        let b3 = p.increments[..3].iter().sum::<Vec3>();
        assert!((p.position(0.3).unwrap() - b3).norm() < 1e-14);
        let mid = p.position(0.35).unwrap();
        assert!((mid - (b3 + 0.5 * p.increments[3])).norm() < 1e-12);
        assert!(p.position(1.0 + 1e-6).is_err());
        assert_eq!(p.negated().position(0.3).unwrap(), -p.position(0.3).unwrap());
    }
}
