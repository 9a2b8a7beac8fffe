//! Numerical laboratory for the back-to-coordinates map of incompressible
//! swirl flows.
//!
//! The crate is organised around one explicit family of rotating-cylinder
//! velocity fields ([`flow`]). For that family it provides
//!
//! * the closed-form inviscid back-to-coordinates map and its Jacobian
//!   ([`euler`]),
//! * finite-difference solvers for the diffusive map `A = x + D` and for the
//!   inverse-Jacobian field `Q`, both in full 3D and in an exact
//!   axisymmetric reduction ([`lagrangian`]),
//! * the rotation–scale decomposition of the Jacobian at the origin and the
//!   heat-kernel representation of its late-time decay ([`jacobian`]),
//! * winding numbers, rectangle degrees and a subdivision zero finder that
//!   turn those Jacobians into a certificate of degeneracy ([`homotopy`]),
//! * a Brownian-shift Monte Carlo representation of the viscous
//!   magnetization variable together with a deterministic grid oracle and a
//!   spectral Leray projection ([`stochastic`]),
//! * configuration, orchestration and data emission ([`harness`]).

pub mod error;
pub mod euler;
pub mod flow;
pub mod harness;
pub mod homotopy;
pub mod jacobian;
pub mod lagrangian;
pub mod linalg;
pub mod stochastic;

pub use error::{Error, Result};
pub use euler::{EulerMapSample, Region};
pub use flow::BumpProfile;
