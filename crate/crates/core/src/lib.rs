//! Finite-dimensional Poisson systems, constraint submanifolds, and
//! reduced brackets.
//!
//! The crate represents Poisson bivectors through expression-valued
//! anchor matrices, classifies constraint sets (Casimir blocks,
//! Poisson-Dirac, Poisson transversal), constructs Dirac and
//! generalized Poisson-Dirac reduced brackets, runs rank diagnostics,
//! performs order-by-order slow-manifold reduction for fast-slow
//! systems, and integrates Hamiltonian flows with conservation
//! diagnostics.

pub use nalgebra;

pub mod builtins;
pub mod chart;
pub mod eps_series;
pub mod expr;
pub mod flow;
pub mod linalg;
pub mod poisson;
pub mod rank_lab;
pub mod reduction;
pub mod rng;
pub mod spec;
pub mod submanifold;
pub mod tol;

pub use chart::Chart;
pub use expr::{Expr, ScalarField};
pub use poisson::BivectorField;
pub use tol::Tolerances;
