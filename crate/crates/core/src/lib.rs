//! Numerical laboratory for mixed local and nonlocal p-Laplace equations with measure data.
//!
//! The crate provides uniform grids and averaging functionals, signed measures
//! with Riesz and Wolff potentials and nonlocal tails, discretizations of the
//! local p-Laplacian and the fractional p-Laplacian, a damped Newton solver
//! with regularization continuation, and experiments that turn comparison and
//! decay estimates into scaling-exponent and bounded-ratio checks.

pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod numeric;
pub mod operators;
pub mod params;
pub mod potentials;
pub mod quadrature;
pub mod rearrangement;
pub mod solver;

pub use error::{Error, Result};
