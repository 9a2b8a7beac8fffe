//! Spectral Leray projection on a periodic box.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::deterministic::{BoxGrid, MagnetizationField};
use crate::error::{invalid, Result};

/// Wrap-around tolerance: fields larger than this on the box faces are not
/// numerically compactly supported.
pub const SUPPORT_TOL: f64 = 1e-8;

/// Result of [`leray_project`].
#[derive(Debug, Clone)]
pub struct LerayOutput {
    /// Divergence-free part `m − ∇η`.
    pub u: MagnetizationField,
    /// Potential with `Δη = div m` and zero mean.
    pub eta: Vec<f64>,
    /// Largest `|m|` on the faces of the box.
    pub wrap_max: f64,
    /// `wrap_max > SUPPORT_TOL`.
    pub support_violation: bool,
}

struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        // x lines are contiguous
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for stride in [n, n * n] {
            for base in 0..n * n * n {
                // visit each line once: its first element has coordinate 0 along the axis
                if (base / stride) % n != 0 {
                    continue;
                }
                for (m, v) in line.iter_mut().enumerate() {
                    *v = data[base + m * stride];
                }
                plan.process(&mut line);
                for (m, v) in line.iter().enumerate() {
                    data[base + m * stride] = *v;
                }
            }
        }
        if inverse {
            let scale = 1.0 / (n * n * n) as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Angular wavenumber of FFT index `m` on a box of length `2L`, zero at
    /// the Nyquist index so that derivatives of real fields stay real.
    fn wavenumber(&self, m: usize, half_width: f64) -> f64 {
        let n = self.n;
        let base = std::f64::consts::PI / half_width;
        if n % 2 == 0 && m == n / 2 {
            0.0
        } else if m <= n / 2 {
            base * m as f64
        } else {
            base * (m as f64 - n as f64)
        }
    }
}

fn check_periodic(grid: &BoxGrid) -> Result<()> {
    if !grid.periodic || grid.n < 4 {
        return Err(invalid("spectral operators need a periodic grid with at least 4 nodes per axis"));
    }
    Ok(())
}

/// `u = m − ∇η` with `Δη = div m`, all derivatives spectral.
///
/// In Fourier space this is the orthogonal projector
/// `û = m̂ − k (k·m̂)/|k|²`, so it is idempotent and self-adjoint up to
/// roundoff, and the spectral divergence of `u` vanishes.
pub fn leray_project(m: &MagnetizationField) -> Result<LerayOutput> {
    let grid = m.grid;
    check_periodic(&grid)?;
    let n = grid.n;
    let fft = Fft3::new(n);
    let mut comps: Vec<Vec<Complex64>> =
        (0..3).map(|c| m.values.iter().map(|v| Complex64::new(v[c], 0.0)).collect()).collect();
    for c in &mut comps {
        fft.transform(c, false);
    }
    let ks: Vec<f64> = (0..n).map(|i| fft.wavenumber(i, grid.half_width)).collect();
    let mut eta_hat = vec![Complex64::new(0.0, 0.0); n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = grid.idx(i, j, k);
                let kv = [ks[i], ks[j], ks[k]];
                let k2 = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
                if k2 == 0.0 {
                    continue;
                }
                let dot = kv[0] * comps[0][c] + kv[1] * comps[1][c] + kv[2] * comps[2][c];
                // ∇η = i k η̂ must equal k (k·m̂)/|k|²
                eta_hat[c] = Complex64::new(0.0, -1.0) * dot / k2;
                for a in 0..3 {
                    comps[a][c] -= kv[a] * dot / k2;
                }
            }
        }
    }
    for c in &mut comps {
        fft.transform(c, true);
    }
    fft.transform(&mut eta_hat, true);
    let values = (0..n * n * n).map(|c| [comps[0][c].re, comps[1][c].re, comps[2][c].re]).collect();
    let wrap_max = face_max(m);
    Ok(LerayOutput {
        u: MagnetizationField { grid, time: m.time, values },
        eta: eta_hat.iter().map(|v| v.re).collect(),
        wrap_max,
        support_violation: wrap_max > SUPPORT_TOL,
    })
}

fn face_max(m: &MagnetizationField) -> f64 {
    let n = m.grid.n;
    let mut worst = 0.0_f64;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                    worst = worst.max(m.at(i, j, k).norm());
                }
            }
        }
    }
    worst
}

/// Spectral divergence at every node.
pub fn spectral_divergence(m: &MagnetizationField) -> Result<Vec<f64>> {
    let grid = m.grid;
    check_periodic(&grid)?;
    let n = grid.n;
    let fft = Fft3::new(n);
    let ks: Vec<f64> = (0..n).map(|i| fft.wavenumber(i, grid.half_width)).collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); n * n * n];
    for a in 0..3 {
        let mut c: Vec<Complex64> = m.values.iter().map(|v| Complex64::new(v[a], 0.0)).collect();
        fft.transform(&mut c, false);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = grid.idx(i, j, k);
                    let kk = [ks[i], ks[j], ks[k]][a];
                    acc[idx] += Complex64::new(0.0, kk) * c[idx];
                }
            }
        }
    }
    fft.transform(&mut acc, true);
    Ok(acc.iter().map(|v| v.re).collect())
}

/// Discrete inner product `h³ Σ a·b`.
pub fn inner_product(a: &MagnetizationField, b: &MagnetizationField) -> f64 {
    let h = a.grid.spacing();
    h * h * h * a.values.iter().zip(&b.values).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;

    fn gaussian_grad(x: &Vec3) -> Vec3 {
        let w2 = 0.5 * 0.5;
        let g = (-x.norm_squared() / (2.0 * w2)).exp();
        -x * (g / w2)
    }

    #[test]
    fn pure_gradient_is_removed() {
        let grid = BoxGrid::periodic(3.5, 32);
        let m = MagnetizationField::from_fn(grid, gaussian_grad);
        let out = leray_project(&m).unwrap();
        assert!(out.u.sup_norm() < 1e-8, "{}", out.u.sup_norm());
        assert!(!out.support_violation);
    }

    #[test]
    fn projection_is_divergence_free() {
        let grid = BoxGrid::periodic(3.5, 32);
        let m = MagnetizationField::from_fn(grid, |x| Vec3::new((-x.norm_squared()).exp(), 0.3 * x.x * (-x.norm_squared()).exp(), 0.0));
        let out = leray_project(&m).unwrap();
        let div = spectral_divergence(&out.u).unwrap();
        assert!(div.iter().all(|d| d.abs() < 1e-10));
        assert!(leray_project(&MagnetizationField::zeros(BoxGrid::bounded(1.0, 8))).is_err());
    }
}
