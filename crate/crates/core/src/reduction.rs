//! Reduced brackets on constraint sets.
//!
//! Three routes produce a reduced anchor matrix at a point:
//!
//! * **Dirac** (split constraints, invertible `{c,c}`):
//!   `{sigma,sigma} - {sigma,c} {c,c}^{-1} {c,sigma}` with all blocks
//!   evaluated on the constraint set.
//! * **Poisson-Dirac** (split constraints, kernel nesting): for each
//!   sigma covector solve `{c,c} theta = -{c,sigma} e_i` by least-norm
//!   pseudo-solve; the reduced entry is
//!   `{sigma_i,sigma_j} - theta_i^T {c,c} theta_j`. The pseudoinverse is
//!   applied strictly pointwise, and the kernel freedom in `theta` drops
//!   out of the contraction.
//! * **Graph extension** (graph constraints, Poisson-Dirac points): each
//!   x covector `alpha` is extended as
//!   `alpha~ = (alpha - J^T Theta, Theta)` and `Theta` is solved from the
//!   requirement that the anchor image of `alpha~` be tangent to the
//!   graph; the reduced entry is `alpha~_i^T M alpha~_j`.
//!
//! Where both apply the routes agree; the tests pin this equivalence.

use crate::expr::{EvalError, ScalarField};
use crate::linalg;
use crate::poisson::BivectorField;
use crate::submanifold::{
    check_kernel_nesting, check_pd_condition, constraint_blocks, GraphSubmanifold, SplitConstraint,
    SubmanifoldError,
};
use crate::tol::Tolerances;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("constraint bracket {{c,c}} is numerically singular (condition number {cond:.3e}); use the Poisson-Dirac path")]
    SingularConstraintMatrix { cond: f64 },
    #[error("kernel nesting violated: solvability fails with residual {residual:.3e}")]
    KernelNestingViolated {
        residual: f64,
        witness: Option<DVector<f64>>,
    },
    #[error("extension system insolvable at a point that passed the Poisson-Dirac check (residual {residual:.3e}); internal consistency failure")]
    ExtensionInsolvable { residual: f64 },
    #[error("point is not Poisson-Dirac (intersection dimension {intersection_dim})")]
    NotPoissonDirac { intersection_dim: usize },
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMethod {
    Dirac,
    PdSplit,
    GraphExtension,
    CasimirShortcut,
}

/// Reduced anchor at a point plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct ReducedBivectorReport {
    pub point: Vec<f64>,
    pub reduced_anchor: DMatrix<f64>,
    pub method: ReductionMethod,
    /// Max solve residual across covectors (0 for the direct inverse).
    pub residual: f64,
    pub condition_number: Option<f64>,
    /// Solved coefficients: `theta` columns for split paths, `Theta`
    /// columns (one per x covector) for the graph path.
    pub extension: Option<DMatrix<f64>>,
}

fn skew_symmetrize_check(m: &DMatrix<f64>) {
    let scale = 1.0 + m.abs().max();
    debug_assert!(
        (m + m.transpose()).abs().max() <= 1e-12 * scale,
        "reduced anchor must be skew"
    );
}

fn require_split_on_manifold(
    s: &SplitConstraint,
    p: &[f64],
    tol: &Tolerances,
) -> Result<(), ReductionError> {
    let deviation = s.deviation(p);
    if deviation > tol.manifold_tol {
        return Err(SubmanifoldError::OffManifold {
            deviation,
            tol: tol.manifold_tol,
        }
        .into());
    }
    Ok(())
}

/// Classical Dirac bracket; requires `{c,c}` invertible below the
/// condition-number threshold.
pub fn dirac_bracket(
    pi: &BivectorField,
    s: &SplitConstraint,
    p: &[f64],
    tol: &Tolerances,
) -> Result<ReducedBivectorReport, ReductionError> {
    require_split_on_manifold(s, p, tol)?;
    let (cc, sc, ss) = constraint_blocks(pi, s, p)?;
    let cond = linalg::condition_number(&cc);
    if !cond.is_finite() || cond > tol.cond_threshold {
        return Err(ReductionError::SingularConstraintMatrix { cond });
    }
    let cc_inv = cc
        .clone()
        .try_inverse()
        .ok_or(ReductionError::SingularConstraintMatrix { cond })?;
    // {c,sigma} = -{sigma,c}^T
    let cs = -sc.transpose();
    let reduced = &ss - &sc * cc_inv * cs;
    skew_symmetrize_check(&reduced);
    Ok(ReducedBivectorReport {
        point: p.to_vec(),
        reduced_anchor: reduced,
        method: ReductionMethod::Dirac,
        residual: 0.0,
        condition_number: Some(cond),
        extension: None,
    })
}

/// Generalized Poisson-Dirac bracket for split constraints; only kernel
/// nesting is required, not invertibility.
pub fn pd_bracket_split(
    pi: &BivectorField,
    s: &SplitConstraint,
    p: &[f64],
    tol: &Tolerances,
) -> Result<ReducedBivectorReport, ReductionError> {
    require_split_on_manifold(s, p, tol)?;
    let (cc, sc, ss) = constraint_blocks(pi, s, p)?;
    let n_s = s.n_sigma();
    let n_c = s.n_c();
    let scale = 1.0 + cc.abs().max().max(sc.abs().max());

    // Casimir shortcut: all constraint brackets vanish, so any theta
    // solves the system and the correction term is exactly zero.
    if cc.abs().max() <= tol.skew_tol * scale && sc.abs().max() <= tol.skew_tol * scale {
        skew_symmetrize_check(&ss);
        return Ok(ReducedBivectorReport {
            point: p.to_vec(),
            reduced_anchor: ss,
            method: ReductionMethod::CasimirShortcut,
            residual: 0.0,
            condition_number: None,
            extension: Some(DMatrix::zeros(n_c, n_s)),
        });
    }

    let cs = -sc.transpose();
    let mut thetas = DMatrix::zeros(n_c, n_s);
    let mut max_residual: f64 = 0.0;
    for i in 0..n_s {
        let rhs: DVector<f64> = -cs.column(i);
        let (theta, residual) = linalg::least_norm_solve(&cc, &rhs, tol.rank_eps);
        if residual > tol.solve_tol * (1.0 + rhs.norm()) {
            let nesting = check_kernel_nesting(pi, s, p, tol)?;
            return Err(ReductionError::KernelNestingViolated {
                residual,
                witness: nesting.witness,
            });
        }
        max_residual = max_residual.max(residual);
        thetas.set_column(i, &theta);
    }

    let mut reduced = ss.clone();
    for i in 0..n_s {
        for j in 0..n_s {
            let ti: DVector<f64> = thetas.column(i).into();
            let tj: DVector<f64> = thetas.column(j).into();
            reduced[(i, j)] -= (ti.transpose() * &cc * tj)[(0, 0)];
        }
    }
    skew_symmetrize_check(&reduced);
    Ok(ReducedBivectorReport {
        point: p.to_vec(),
        reduced_anchor: reduced,
        method: ReductionMethod::PdSplit,
        residual: max_residual,
        condition_number: Some(linalg::condition_number(&cc)),
        extension: Some(thetas),
    })
}

/// (tangency matrix B, per-covector right sides, injection G, anchor M).
type TangencySystem = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Tangency system for the graph extension ansatz at `p`: the extension
/// of the i-th x covector solves `B Theta_i = rhs[:, i]` and the ambient
/// covector is `alpha_hat_i + G Theta_i`.
fn graph_tangency_system(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
) -> Result<TangencySystem, ReductionError> {
    let m = pi.anchor_matrix(p)?;
    let (v, g) = crate::submanifold::graph_frames(n, p)?;
    let dim = n.chart().dim();
    let n_x = n.n_x();

    let b = &v * &m * &g;
    let mut rhs = DMatrix::zeros(n.n_y(), n_x);
    for i in 0..n_x {
        let mut alpha_hat = DVector::zeros(dim);
        alpha_hat[n.x_indices()[i]] = 1.0;
        rhs.set_column(i, &(-(&v * &m * alpha_hat)));
    }
    Ok((b, rhs, g, m))
}

/// Induced bivector on a graph submanifold via the extension ansatz.
/// Requires the Poisson-Dirac condition at `p`.
pub fn induced_bivector_graph(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<ReducedBivectorReport, ReductionError> {
    let pd = check_pd_condition(pi, n, p, tol)?;
    if !pd.is_pd {
        return Err(ReductionError::NotPoissonDirac {
            intersection_dim: pd.intersection_dim,
        });
    }
    let (b, rhs, g, m) = graph_tangency_system(pi, n, p)?;
    let (n_x, n_y) = (n.n_x(), n.n_y());
    let dim = n.chart().dim();

    let mut thetas = DMatrix::zeros(n_y, n_x);
    let mut max_residual: f64 = 0.0;
    for i in 0..n_x {
        let rhs_i: DVector<f64> = rhs.column(i).into();
        let (theta, residual) = linalg::least_norm_solve(&b, &rhs_i, tol.rank_eps);
        if residual > tol.solve_tol * (1.0 + rhs_i.norm()) {
            return Err(ReductionError::ExtensionInsolvable { residual });
        }
        max_residual = max_residual.max(residual);
        thetas.set_column(i, &theta);
    }

    // Ambient extensions alpha~_i = alpha_hat_i + G Theta_i.
    let mut ext = DMatrix::zeros(dim, n_x);
    for i in 0..n_x {
        let mut alpha = DVector::zeros(dim);
        alpha[n.x_indices()[i]] = 1.0;
        alpha += &g * thetas.column(i);
        ext.set_column(i, &alpha);
    }
    let reduced = ext.transpose() * &m * &ext;
    skew_symmetrize_check(&reduced);
    Ok(ReducedBivectorReport {
        point: p.to_vec(),
        reduced_anchor: reduced,
        method: ReductionMethod::GraphExtension,
        residual: max_residual,
        condition_number: None,
        extension: Some(thetas),
    })
}

/// Pull a Hamiltonian on the ambient chart back to the x block by
/// substituting `y = y0(x)`.
pub fn reduce_hamiltonian(
    h: &ScalarField,
    n: &GraphSubmanifold,
) -> Result<ScalarField, SubmanifoldError> {
    let mut map = HashMap::new();
    for (k, &yi) in n.y_indices().iter().enumerate() {
        map.insert(n.chart().name(yi).to_string(), n.y0()[k].expr().clone());
    }
    let pulled = h.expr().substitute(&map);
    Ok(ScalarField::new(n.x_chart().clone(), pulled)?)
}

/// One fitted reduced-anchor entry: the (i, j) index pair, named
/// monomial coefficients, and the max fit residual over the grid.
pub type EntryFit = ((usize, usize), Vec<(String, f64)>, f64);

/// Diagnostic polynomial fit of reduced-anchor entries over a grid of
/// x points: least squares in the monomials of total degree <= `degree`.
/// Never a substitute for the pointwise reduction.
pub fn fit_reduced_entries(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    grid: &[Vec<f64>],
    degree: usize,
    tol: &Tolerances,
) -> Result<Vec<EntryFit>, ReductionError> {
    assert!(!grid.is_empty());
    let n_x = n.n_x();
    let monomials = monomial_exponents(n_x, degree);
    let rows = grid.len();
    let mut design = DMatrix::zeros(rows, monomials.len());
    let mut reduced_at: Vec<DMatrix<f64>> = Vec::with_capacity(rows);
    for (r, x) in grid.iter().enumerate() {
        for (c, expo) in monomials.iter().enumerate() {
            design[(r, c)] = expo
                .iter()
                .enumerate()
                .map(|(k, &e)| x[k].powi(e as i32))
                .product();
        }
        let p = n.lift(x)?;
        reduced_at.push(induced_bivector_graph(pi, n, &p, tol)?.reduced_anchor);
    }
    let mut out = Vec::new();
    for i in 0..n_x {
        for j in (i + 1)..n_x {
            let b = DVector::from_iterator(rows, reduced_at.iter().map(|m| m[(i, j)]));
            let (coef, _) = linalg::least_norm_solve(&design, &b, tol.rank_eps);
            let residual = (&design * &coef - &b).abs().max();
            let named = monomials
                .iter()
                .zip(coef.iter())
                .map(|(expo, c)| (monomial_name(n, expo), *c))
                .collect();
            out.push(((i, j), named, residual));
        }
    }
    Ok(out)
}

fn monomial_exponents(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; vars]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for base in &out {
            for v in 0..vars {
                let mut e = base.clone();
                e[v] += 1;
                if !next.contains(&e) && !out.contains(&e) {
                    next.push(e);
                }
            }
        }
        out.extend(next);
    }
    out.sort();
    out.dedup();
    out
}

fn monomial_name(n: &GraphSubmanifold, expo: &[usize]) -> String {
    let parts: Vec<String> = expo
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(k, &e)| {
            let name = n.x_chart().name(k);
            if e == 1 {
                name.to_string()
            } else {
                format!("{}^{}", name, e)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}
