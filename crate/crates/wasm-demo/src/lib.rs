//! Browser bindings: the closed-form inviscid Jacobian, the viscous
//! origin curve `c(t)` from a coarse reduced solve, and the degree of `F` on
//! a user-chosen rectangle.
//!
//! Every export returns a flat `Float64Array` or an error string.

use std::f64::consts::PI;

use backmap::euler::euler_jacobian;
use backmap::flow::BumpProfile;
use backmap::harness::OriginField;
use backmap::homotopy::{boundary_degree as degree_on, ParameterRectangle};
use backmap::jacobian::decompose_at;
use backmap::lagrangian::ReducedGrid;
use backmap::linalg::Vec3;
use wasm_bindgen::prelude::*;

/// Coarsest radial grid the solver accepts for this shell: eight spacings
/// across it, and never fewer than 97 nodes.
fn demo_nodes(p: &BumpProfile) -> usize {
    let half_width = 2.0 * p.outer_extent();
    let shell = (p.r_outer - p.r_inner).min(p.z_outer - p.z_inner);
    ((8.0 * half_width / shell).ceil() as usize + 1).max(97)
}

fn profile(shell: f64, s: f64) -> Result<BumpProfile, String> {
    let p = BumpProfile::with_shell(shell, s);
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn field(shell: f64, nu: f64) -> Result<OriginField, String> {
    let p = profile(shell, PI)?;
    OriginField::new(p, ReducedGrid::split(&p, 2.0 * p.outer_extent(), demo_nodes(&p), nu)).map_err(|e| e.to_string())
}

/// `[a, b, det, m00, m01, m10, m11]` of `∇A^E(x, t)` for a swirl of total
/// angle `s`.
#[wasm_bindgen]
pub fn euler_jacobian_at(x: f64, y: f64, z: f64, t: f64, shell: f64, s: f64) -> Result<Vec<f64>, String> {
    let p = profile(shell, s)?;
    let m = euler_jacobian(&Vec3::new(x, y, z), t, &p);
    let d = decompose_at(&m, t, s);
    Ok(vec![d.a, d.b, m.determinant(), m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// `[t₀, Re c₀, Im c₀, t₁, …]` for `c = ∂w/∂r(0, t)` at `samples` equally
/// spaced times in `[0, t_max]`.
#[wasm_bindgen]
pub fn origin_curve(s: f64, nu: f64, shell: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(t_max > 0.0) || samples < 2 {
        return Err("need t_max > 0 and at least two samples".into());
    }
    let f = field(shell, nu)?;
    let mut out = Vec::with_capacity(3 * samples);
    for k in 0..samples {
        let t = t_max * k as f64 / (samples - 1) as f64;
        let c = f.c(t, s).map_err(|e| e.to_string())?;
        out.extend([t, c.re, c.im]);
    }
    Ok(out)
}

/// `[degree, solver runs]` of `F` on `[0, t_hi] × [s_lo, s_hi]`.
#[wasm_bindgen]
pub fn rectangle_degree(nu: f64, shell: f64, t_hi: f64, s_lo: f64, s_hi: f64) -> Result<Vec<f64>, String> {
    let f = field(shell, nu)?;
    let rect = ParameterRectangle::new(0.0, t_hi, s_lo, s_hi, 257, 9).map_err(|e| e.to_string())?;
    let d = degree_on(&rect, &f).map_err(|e| e.to_string())?;
    Ok(vec![d as f64, f.solver_runs() as f64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_is_unimodular() {
        let v = euler_jacobian_at(0.3, 0.2, 0.1, 1.0, 0.25, PI).unwrap();
        assert!((v[2] - 1.0).abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_starts_at_identity_and_rejects_inviscid() {
        let v = origin_curve(PI, 1e-2, 0.25, 2.0, 3).unwrap();
        assert_eq!(&v[..3], &[0.0, 1.0, 0.0]);
        // at t0 the core has turned by −π
        assert!((v[3] - 1.0).abs() < 1e-9 && v[4] < -0.9);
        assert!(origin_curve(PI, 0.0, 0.25, 2.0, 3).unwrap_err().contains("never forgets"));
    }

    #[test]
    fn short_sweep_has_zero_degree() {
        let v = rectangle_degree(1e-2, 0.25, 30.0, 0.0, PI / 8.0).unwrap();
        assert_eq!(v[0], 0.0);
    }
}
