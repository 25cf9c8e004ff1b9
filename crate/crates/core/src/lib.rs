//! Solvers for block-separable convex programs with linear coupling
//! constraints:
//!
//! ```text
//! minimize  sum_i f_i(x_i)   subject to   sum_i A_i x_i = b
//! ```
//!
//! One regularized ADMM engine drives four update schedules — Gauss-Seidel
//! sweeps, fully parallel Jacobi sweeps, a grouped hybrid of the two, and the
//! two-group variant that covers merely convex objectives — all sharing the
//! same dual step and the same prox-solvable block subproblems induced by
//! regularizers of the form `P_j = tau_j I - rho A_j^T A_j`.
//!
//! The crate also computes the regularization scalars each schedule's
//! convergence theory prescribes ([`tau`]), generates the two benchmark
//! families with seeded reproducibility, and drives averaged sweeps over
//! them ([`experiments`]).

pub mod block;
pub mod engine;
mod error;
pub mod experiments;
pub mod io;
pub mod objective;
pub mod problem;
pub mod tau;

pub use error::{Error, Result};
