//! Brownian-shift representation of the viscous magnetization variable.
//!
//! For a given velocity `u` the magnetization obeys
//! `∂ₜm + u·∇m + (∇u)ᵀm − νΔm = 0`. Along a Brownian path `b` the shifted
//! field `ũ(x, t) = u(x + σ b_t, t)` transports `m̃ = (∇Ã)ᵀ m₀(Ã)` without
//! diffusion, and by Itô's formula `m(x, t) = E[m̃(x − σ b_t, t)]` when
//! `σ = √(2ν)`.
//!
//! * [`fields`]: velocity samplers, initial data and the Clebsch form
//!   `m₀ = Σ βᵢ∇αᵢ`;
//! * [`path`]: seeded Brownian paths;
//! * [`trace`]: characteristic tracing and the Monte Carlo estimator;
//! * [`deterministic`]: a grid solver for the same equation;
//! * [`leray`]: spectral projection onto divergence-free fields.

pub mod deterministic;
pub mod fields;
pub mod leray;
pub mod path;
pub mod trace;

pub use deterministic::{solve_m_deterministic, BoxGrid, MRunReport, MSolveSpec, MagnetizationField, StencilOrder};
pub use fields::{Blob, ClebschData, ConstantVelocity, FrozenSwirl, LinearVelocity, VectorSampler, VelocityField};
pub use leray::{leray_project, spectral_divergence, LerayOutput};
pub use path::BrownianPath;
pub use trace::{mc_magnetization, shifted_velocity, tilde_m, trace_back, McEstimate, McOptions};
