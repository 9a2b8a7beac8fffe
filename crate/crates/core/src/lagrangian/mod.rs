//! Solvers for the diffusive back-to-coordinates map.
//!
//! The map solves `∂ₜA + u·∇A − νΔA = 0` with `A(x, 0) = x`. The unknown
//! actually stored is the displacement `D = A − x`, which obeys
//! `∂ₜD + u·∇D − νΔD = −u` and vanishes in the far field, so a truncated box
//! with homogeneous Dirichlet data is a faithful model as long as the
//! boundary monitor stays small.
//!
//! Two interchangeable discretisations are provided:
//!
//! * [`cartesian`]: the full 3D finite-difference reference, which can also
//!   co-integrate the inverse-Jacobian field `Q`;
//! * [`reduced`]: the exact axisymmetric reduction. Uniqueness forces
//!   `A₁ + iA₂ = e^{iϑ} w(r, z, t)` and `A₃ = z`, and the complex profile `w`
//!   satisfies `∂ₜw + iΩw = ν(∂ᵣᵣ + ∂ᵣ/r − 1/r² + ∂zz)w`.
//!
//! [`snapshot`] implements the on-disk field cache shared by both.

pub mod cartesian;
pub mod reduced;
pub mod snapshot;

pub use cartesian::{
    gradient_at_origin, hessian_origin, solve_displacement, solve_q, z_defect, CartesianSolver, DisplacementField,
    GridSpec, QField, RunReport, StepOutcome,
};
pub use reduced::{c_at_origin, solve_reduced, ReducedGrid, ReducedSolver, ReducedState, TimeScheme};

/// Advective Courant number used by the stability contract.
pub const C_ADV: f64 = 0.5;
/// Diffusive number used by the stability contract.
pub const C_DIFF: f64 = 1.0 / 6.0;

/// Largest stable time step for an explicit RK3 step with the given speed,
/// spacing and viscosity. `f64::INFINITY` when neither constraint binds.
pub fn explicit_dt_limit(speed: f64, h: f64, nu: f64) -> f64 {
    let adv = if speed > 0.0 { C_ADV * h / speed } else { f64::INFINITY };
    let diff = if nu > 0.0 { C_DIFF * h * h / nu } else { f64::INFINITY };
    adv.min(diff)
}
