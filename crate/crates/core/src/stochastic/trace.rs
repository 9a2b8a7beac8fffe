//! Characteristics of the shifted flow and the Monte Carlo estimator of `m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{ClebschData, VelocityField};
use super::path::BrownianPath;
use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat3, Vec3};

/// `ũ(x, t) = u(x + σ b_t, t)`.
pub fn shifted_velocity(u: &impl VelocityField, path: &BrownianPath, sigma: f64, x: &Vec3, t: f64) -> Result<Vec3> {
    Ok(u.velocity(&(x + sigma * path.position(t)?), t))
}

/// `ũ` and `∇ũ` at one point.
fn shifted_sample(u: &impl VelocityField, path: &BrownianPath, sigma: f64, x: &Vec3, t: f64) -> Result<(Vec3, Mat3)> {
    let y = if sigma == 0.0 { *x } else { x + sigma * path.position(t)? };
    Ok((u.velocity(&y, t), u.gradient(&y, t)))
}

/// Back-to-labels point and its Jacobian for the flow sampled by `flow`.
///
/// Integrates `dX/dτ = ũ(X, τ)` from `X(t) = x` back to `τ = 0` with
/// classical RK4 in `steps` equal steps, together with the variational
/// equation `dY/dτ = ∇ũ(X, τ) Y`, `Y(t) = I`. Returns `(X(0), Y(0))`.
pub fn trace_back<F>(flow: F, x: &Vec3, t: f64, steps: usize) -> Result<(Vec3, Mat3)>
where
    F: Fn(&Vec3, f64) -> Result<(Vec3, Mat3)>,
{
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("trace time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok((*x, Mat3::identity()));
    }
    if steps == 0 {
        return Err(invalid("trace needs at least one step"));
    }
    let h = -t / steps as f64;
    let mut xs = *x;
    let mut ys = Mat3::identity();
    let mut recent: Vec<(f64, Vec3)> = Vec::new();
    for k in 0..steps {
        let tau = t + h * k as f64;
        let (u1, g1) = flow(&xs, tau)?;
        let k1x = u1;
        let k1y = g1 * ys;
        let (u2, g2) = flow(&(xs + 0.5 * h * k1x), tau + 0.5 * h)?;
        let k2x = u2;
        let k2y = g2 * (ys + 0.5 * h * k1y);
        let (u3, g3) = flow(&(xs + 0.5 * h * k2x), tau + 0.5 * h)?;
        let k3x = u3;
        let k3y = g3 * (ys + 0.5 * h * k2y);
        let tau_next = if k + 1 == steps { 0.0 } else { tau + h };
        let (u4, g4) = flow(&(xs + h * k3x), tau_next)?;
        let k4x = u4;
        let k4y = g4 * (ys + h * k3y);
        xs += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        ys += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        recent.push((tau_next, xs));
        if recent.len() > 4 {
            recent.remove(0);
        }
        if !(xs.iter().all(|v| v.is_finite()) && ys.iter().all(|v| v.is_finite())) {
            return Err(Error::Trajectory { tau: tau_next, reason: format!("non-finite state; last points {recent:?}") });
        }
    }
    Ok((xs, ys))
}

/// Steps used for a horizon `t` with nominal step `dt` (at least one).
pub fn step_count(t: f64, dt: f64) -> usize {
    ((t / dt) - 1e-9).ceil().max(1.0) as usize
}

/// `m̃(x, t) = (∇Ã)ᵀ m₀(Ã)` for the flow `u` shifted by `σ b`.
pub fn tilde_m(
    u: &impl VelocityField,
    clebsch: &ClebschData,
    path: &BrownianPath,
    sigma: f64,
    x: &Vec3,
    t: f64,
) -> Result<Vec3> {
    if t == 0.0 {
        return Ok(clebsch.m0(x));
    }
    let steps = step_count(t, path.dt);
    let (a, grad) = trace_back(|y, tau| shifted_sample(u, path, sigma, y, tau), x, t, steps)?;
    Ok(grad.transpose() * clebsch.m0(&a))
}

/// Settings of [`mc_magnetization`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOptions {
    pub n_paths: usize,
    /// Path and RK4 step; `None` means `t/512`.
    pub dt: Option<f64>,
    pub seed: u64,
    /// Pair every path `b` with `−b`.
    pub antithetic: bool,
    /// Shift scale; `None` means `√(2ν)`.
    pub sigma: Option<f64>,
    pub parallel: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_paths: 10_000, dt: None, seed: 0, antithetic: true, sigma: None, parallel: true }
    }
}

impl McOptions {
    pub fn sigma(&self, nu: f64) -> f64 {
        self.sigma.unwrap_or((2.0 * nu).sqrt())
    }
}

/// Monte Carlo mean and standard error of `m(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: [f64; 3],
    pub stderr: [f64; 3],
    pub n_paths: usize,
    pub sigma: f64,
    pub dt: f64,
}

/// `m(x, t) = E[m̃(x − σ b_t, t)]` over `opts.n_paths` Brownian paths.
///
/// Each path is generated from `(seed, path index)` alone and the per-path
/// values are summed in index order, so parallel and sequential runs agree
/// bit for bit. With antithetic pairing the standard error is computed from
/// the pair averages.
pub fn mc_magnetization(
    u: &impl VelocityField,
    clebsch: &ClebschData,
    nu: f64,
    x: &Vec3,
    t: f64,
    opts: &McOptions,
) -> Result<McEstimate> {
    if opts.n_paths < 2 {
        return Err(invalid(format!("need at least 2 paths, got {}", opts.n_paths)));
    }
    if opts.antithetic && opts.n_paths % 2 != 0 {
        return Err(invalid(format!("antithetic sampling needs an even path count, got {}", opts.n_paths)));
    }
    if !(nu >= 0.0 && nu.is_finite()) || !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("need finite ν ≥ 0 and t ≥ 0, got ν = {nu}, t = {t}")));
    }
    let sigma = opts.sigma(nu);
    let dt_nominal = opts.dt.unwrap_or(t / 512.0);
    let steps = if t > 0.0 { step_count(t, dt_nominal) } else { 1 };
    let dt = if t > 0.0 { t / steps as f64 } else { dt_nominal.max(f64::MIN_POSITIVE) };
    if sigma == 0.0 || t == 0.0 {
        let m = tilde_m(u, clebsch, &BrownianPath::still(dt, steps), 0.0, x, t)?;
        return Ok(McEstimate { mean: m.into(), stderr: [0.0; 3], n_paths: opts.n_paths, sigma, dt });
    }
    let units = if opts.antithetic { opts.n_paths / 2 } else { opts.n_paths };
    let sample = |k: usize| -> Result<Vec3> {
        let path = BrownianPath::generate(opts.seed, k as u64, dt, steps)?;
        let bar = |p: &BrownianPath| -> Result<Vec3> {
            let y = x - sigma * p.position(t)?;
            tilde_m(u, clebsch, p, sigma, &y, t)
        };
        if opts.antithetic {
            Ok(0.5 * (bar(&path)? + bar(&path.negated())?))
        } else {
            bar(&path)
        }
    };
    let values: Vec<Vec3> = if opts.parallel {
        (0..units).into_par_iter().map(sample).collect::<Result<_>>()?
    } else {
        (0..units).map(sample).collect::<Result<_>>()?
    };
    let n = units as f64;
    let mean = values.iter().fold(Vec3::zeros(), |acc, v| acc + v) / n;
    let var = values.iter().fold(Vec3::zeros(), |acc, v| {
        let d = v - mean;
        acc + d.component_mul(&d)
    }) / (n - 1.0);
    let stderr = var.map(|v| (v / n).sqrt());
    Ok(McEstimate { mean: mean.into(), stderr: stderr.into(), n_paths: opts.n_paths, sigma, dt })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::stochastic::fields::{Blob, ConstantVelocity, LinearVelocity};

    fn blob() -> ClebschData {
        ClebschData::coordinates(Arc::new(Blob { center: [0.1, 0.0, 0.0], radius: 1.5, amplitude: [1.0, 0.5, -0.3], twist: 0.4 }))
    }

    #[test]
    fn zero_flow_traces_identity() {
        let (a, g) = trace_back(|_: &Vec3, _| Ok((Vec3::zeros(), Mat3::zeros())), &Vec3::new(0.3, 0.2, 0.1), 1.0, 10).unwrap();
        assert_eq!(a, Vec3::new(0.3, 0.2, 0.1));
        assert_eq!(g, Mat3::identity());
    }

    #[test]
    fn translation_keeps_m0_shape() {
        let c = ClebschData::coordinates(Arc::new(Blob { center: [0.0; 3], radius: 1.0, amplitude: [0.2, 0.3, 0.4], twist: 0.0 }));
        let u = ConstantVelocity(Vec3::new(0.5, 0.0, 0.0));
        let path = BrownianPath::still(0.01, 100);
        let x = Vec3::new(0.7, 0.1, 0.0);
        let m = tilde_m(&u, &c, &path, 0.0, &x, 1.0).unwrap();
        let expect = c.m0(&(x - Vec3::new(0.5, 0.0, 0.0)));
        assert!((m - expect).norm() < 1e-13);
    }

    #[test]
    fn shifted_linear_velocity_is_unbiased() {
        let u = LinearVelocity(Mat3::new(0.0, -1.0, 0.3, 1.0, 0.0, 0.0, 0.2, 0.0, 0.0));
        let x = Vec3::new(0.4, -0.2, 0.1);
        let sigma = 0.3;
        let n = 10_000;
        let vals: Vec<Vec3> = (0..n)
            .map(|k| shifted_velocity(&u, &BrownianPath::generate(5, k, 0.01, 50).unwrap(), sigma, &x, 0.5).unwrap())
            .collect();
        let mean = vals.iter().sum::<Vec3>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).component_mul(&(v - mean))).sum::<Vec3>() / (n as f64 - 1.0))
            .map(|v| (v / n as f64).sqrt());
        let exact = u.velocity(&x, 0.5);
        for c in 0..3 {
            assert!((mean[c] - exact[c]).abs() <= 3.0 * sd[c] + 1e-15, "component {c}");
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let u = crate::flow::BumpProfile::with_shell(0.5, 1.0);
        let c = blob();
        let x = Vec3::new(0.5, 0.2, 0.1);
        let mut opts = McOptions { n_paths: 64, seed: 9, dt: Some(0.02), ..Default::default() };
        let par = mc_magnetization(&u, &c, 0.01, &x, 0.5, &opts).unwrap();
        opts.parallel = false;
        let seq = mc_magnetization(&u, &c, 0.01, &x, 0.5, &opts).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn inviscid_estimate_has_no_spread() {
        let u = crate::flow::BumpProfile::with_shell(0.5, 1.0);
        let c = blob();
        let x = Vec3::new(0.5, 0.2, 0.1);
        let e = mc_magnetization(&u, &c, 0.0, &x, 0.5, &McOptions { n_paths: 8, ..Default::default() }).unwrap();
        assert_eq!(e.stderr, [0.0; 3]);
        let direct = tilde_m(&u, &c, &BrownianPath::still(e.dt, 512), 0.0, &x, 0.5).unwrap();
        assert_eq!(Vec3::from(e.mean), direct);
    }

    #[test]
    fn odd_path_counts_are_rejected_with_pairing() {
        let u = ConstantVelocity(Vec3::zeros());
        let opts = McOptions { n_paths: 7, ..Default::default() };
        assert!(mc_magnetization(&u, &blob(), 0.01, &Vec3::zeros(), 0.1, &opts).is_err());
    }
}
