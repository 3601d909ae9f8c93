//! Shared numeric tolerances.
//!
//! One instance is threaded through every geometric query so that rank
//! decisions, manifold membership, and solver residuals all use the same
//! declared cuts. Reports echo the values in effect.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative SVD rank cut; singular values below
    /// `max(n, m) * sigma_max * rank_eps` (floor `rank_eps`) count as zero.
    pub rank_eps: f64,
    /// Maximum constraint violation for a point to count as on-manifold.
    pub manifold_tol: f64,
    /// Residual bound for least-norm solves, scaled by `1 + |rhs|`.
    pub solve_tol: f64,
    /// Condition-number cut separating invertible {c,c} from the
    /// pseudo-solve path.
    pub cond_threshold: f64,
    /// Jacobiator residual bound, scaled by local entry magnitude.
    pub jacobi_tol: f64,
    /// Casimir test bound on the sup norm of the Hamiltonian vector field.
    pub casimir_tol: f64,
    /// Skewness bound for validated bivector input.
    pub skew_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_eps: 1e-12,
            manifold_tol: 1e-9,
            solve_tol: 1e-9,
            cond_threshold: 1e8,
            jacobi_tol: 1e-10,
            casimir_tol: 1e-10,
            skew_tol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn with_rank_eps(mut self, eps: f64) -> Self {
        self.rank_eps = eps;
        self
    }

    pub fn with_manifold_tol(mut self, tol: f64) -> Self {
        self.manifold_tol = tol;
        self
    }
}
