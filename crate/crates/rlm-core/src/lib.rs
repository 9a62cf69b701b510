//! Riemannian Levenberg-Marquardt for nonlinear least squares on manifolds.
//!
//! The crate provides the manifold interface and concrete geometries
//! (Euclidean, sphere, fixed-rank matrices, products), a matrix-free
//! residual-problem abstraction, the damped subproblem solvers, the RLM
//! iteration with its trust-region-like damping update, Gauss-Newton and
//! steepest-descent baselines, seeded benchmark generators, and the trace /
//! summary / convergence-order tooling used by the benchmark harness.

pub mod baselines;
pub mod error;
pub mod manifold;
pub mod manifolds;
pub mod order;
pub mod problem;
pub mod problems;
pub mod solver;
pub mod subproblem;
pub mod trace;

pub use error::{Error, Result};
pub use manifold::{
    check_retraction, random_tangent_basis, tangent_basis, AmbientVec, Manifold, Point,
    PointCoords, RetractionCheck, Tangent, TangentBasis, TangentCoords,
};
pub use order::{estimate_order, OrderEstimate};
pub use problem::{fd_check, gradient, jacobian_norm_estimate, objective, ResidualProblem};
pub use solver::{rho, rlm_run, update_mu, RlmConfig, RunSummary, Status};
pub use subproblem::{solve_subproblem, theta, SubproblemConfig, SubproblemMethod};
pub use trace::{IterRecord, Trace, TRACE_HEADER};
