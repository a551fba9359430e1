//! Finite-difference laboratory for isentropic compressible Navier-Stokes
//! flow with density-degenerate viscosity `mu = alpha * rho^delta`.
//!
//! The evolution is carried in the variables `phi = rho^((delta-1)/2)` and
//! `u`. Each time slab is solved by Picard iteration over a linearized
//! problem with frozen coefficients and an artificial viscosity
//! `(phi^2 + eta^2) L`, where `L` is the Lamé operator. Around the solver
//! sit the vacuum-dynamics oracle (exact free transport along
//! characteristics), the virial functional `I(t)` with its lower and upper
//! bound curves, and per-step diagnostics.

pub mod diagnostics;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod initdata;
pub mod linearized;
pub mod model;
pub mod picard;
pub mod state;
pub mod vacuum;

pub use error::{Error, Result};
pub use grid::{Boundary, Grid, ScalarField, TensorField, VectorField};
pub use model::Params;
pub use state::State;

/// A node is treated as vacuum when `phi` is below this threshold.
pub const EPS_VAC: f64 = 1e-8;
