//! Penalty-based projected gradient methods for pessimistic minimax bilevel problems
//!
//! ```text
//! min_{x ∈ X} max_{y ∈ Y, λ ∈ Λ} f(x, y, λ) = f̄(x, y) + λᵀ(Ax + By − c)
//! s.t. y ∈ argmin_{z ∈ Y} g(z, λ)
//! ```
//!
//! The lower-level constraint is replaced by the penalty `ρ(g(y, λ) − min_z g(z, λ))` and the
//! resulting min-max-min problem is solved by projected multi-step ascent-descent
//! ([`solver::pg_mad`]) or its accelerated variant ([`solver::na_pg_mad`]).
//!
//! Modules:
//! - [`model`]: problem data, oracles and smoothness constants.
//! - [`geometry`]: boxes, polyhedra, projections, a simplex LP solver and the lower-level oracle.
//! - [`penalty`]: the penalty function, its proximal surrogate and the value function `ϑ`.
//! - [`solver`]: the iterative methods, penalty continuation and iteration budgets.
//! - [`stationarity`]: gap measures, ε-KKT checks, hypergradient and multiplier residuals.
//! - [`harness`]: built-in problems, instance generators, a grid oracle and the experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod penalty;
pub mod solver;
pub mod stationarity;

pub use error::{MmboError, Result};
pub use model::{Dims, MinimaxBilevelProblem};
pub use solver::{na_pg_mad, pg_mad, solve, SolverConfig, SolverTrace};
