//! Sigma-model fields and the relativistic perfect fluids they generate.

// `!(a < b)` keeps NaN on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod energy_stress;
pub mod error;
pub mod fluid_equations;
pub mod geometry;
pub mod gravity;
pub mod map_calculus;
pub mod reductions;
pub mod verify;

pub use error::{Error, Result};
