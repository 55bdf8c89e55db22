//! Crank-Nicolson upwind solver for parabolic problems with two small
//! parameters and an interior discontinuity in the convection and source
//! terms. Spatial meshes are layer-adapted near `x = 0`, both sides of the
//! discontinuity and `x = 1`.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod discretization;
pub mod error;
pub mod mesh;
pub mod problem;
pub mod registry;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{LayerParams, SpatialMesh, ThetaVariant, TimeGrid};
pub use problem::{derive_regime, validate, Case, PerturbationParams, ProblemSpec, RegimeConstants};
pub use solver::{march, CheckPolicy, DiscreteSolution};
