//! Nonlocal fully nonlinear elliptic operators on uniform grids: kernel
//! classes with ellipticity certification, Pucci extremal and Isaacs
//! inf-sup operators, monotone Dirichlet solves, and the regularization
//! pipeline that replaces a viscosity solution by smooth solutions of
//! nearby smoothed equations, with a verification harness.

// Validation guards are written as !(x > 0.0) on purpose: the negated
// comparison rejects NaN, which x <= 0.0 would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernels;
pub mod mollify;
pub mod operators;
pub mod quad;
pub mod regularize;
pub mod io;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
