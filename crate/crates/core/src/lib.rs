//! Optimization on constraint manifolds with corners.
//!
//! A nonlinear program with equality and inequality constraints is written as
//! a [`graph::FactorGraph`]. Its constraint-connected components become
//! [`cmc::ConstrainedManifold`]s; the solvers in [`optimizer`] then minimize
//! the cost directly over the product of those manifolds, keeping every
//! iterate feasible through the projection retraction in [`retraction`].
//! [`baselines`] holds penalty-style reference solvers and [`problems`] a
//! small library of benchmark instances.

pub mod baselines;
pub mod calculus;
pub mod cmc;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod retraction;

pub use error::{Error, Result};
pub use graph::{FactorGraph, Values, VariableKey};
