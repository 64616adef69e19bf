//! Chemotaxis-Navier-Stokes simulation on masked Cartesian grids with Robin
//! oxygen exchange, plus an energy ledger that evaluates the entropy and
//! energy functionals of the system and checks their inequalities.

// Negated comparisons double as NaN rejection in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod density;
pub mod driver;
pub mod energy;
pub mod error;
pub mod field;
pub mod fluid;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod ops;
pub mod oxygen;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use field::{FaceField, ScalarField, VectorField};
pub use geometry::{build_grid, integrate_boundary, integrate_volume, BoundaryData, DomainSpec, Grid, Shape, Side};
