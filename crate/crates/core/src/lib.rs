//! Weighted and non-weighted POD-greedy reduced basis methods for a linear
//! parabolic problem with random boundary data.

pub mod construction;
pub mod error;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod rom;
pub mod solvers;
pub mod stochastics;

pub use error::{Error, Result};
