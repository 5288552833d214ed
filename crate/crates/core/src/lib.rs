//! Positive solutions of a quasilinear Dirichlet problem with competing
//! power nonlinearities, discretized by piecewise-linear finite elements.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod layer;
pub mod precond;
pub mod problem;
pub mod rayleigh;
pub mod solver;

pub use error::{Error, Result};
