//! Numerical rank diagnostics for constraint submanifolds.
//!
//! At a Poisson-Dirac point the three ranks tie together as
//!
//! ```text
//! rank (T_pN)^{pi-perp} + rank pi_N,p = rank pi_p
//! ```
//!
//! Scans along parametrized paths record all three, flag grid-level rank
//! drops, and check lower semicontinuity (rank may drop at a limit point
//! but never jump up). Verdicts are grid-level statements, not continuum
//! claims, and every record carries the rank tolerance that produced it.

use crate::chart::Chart;
use crate::expr::{EvalError, ScalarField};
use crate::linalg;
use crate::poisson::BivectorField;
use crate::reduction::{induced_bivector_graph, ReductionError};
use crate::submanifold::{pi_orthogonal, GraphSubmanifold, SubmanifoldError};
use crate::tol::Tolerances;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RankLabError {
    #[error("path leaves the submanifold at t = {t}: deviation {deviation}")]
    PathLeavesManifold { t: f64, deviation: f64 },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankIdentity {
    pub holds: bool,
    pub lhs: usize,
    pub rhs: usize,
    pub rank_orthogonal: usize,
    pub rank_reduced: usize,
    pub rank_ambient: usize,
}

/// Check `rank orth + rank reduced = rank ambient` at a Poisson-Dirac
/// point.
pub fn rank_identity_check(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<RankIdentity, RankLabError> {
    let orth = pi_orthogonal(pi, n, p, tol)?;
    let reduced = induced_bivector_graph(pi, n, p, tol)?;
    let ambient = pi.anchor_matrix(p)?;
    let rank_orthogonal = orth.dim();
    let rank_reduced = linalg::rank(&reduced.reduced_anchor, tol.rank_eps);
    let rank_ambient = linalg::rank(&ambient, tol.rank_eps);
    let lhs = rank_orthogonal + rank_reduced;
    Ok(RankIdentity {
        holds: lhs == rank_ambient,
        lhs,
        rhs: rank_ambient,
        rank_orthogonal,
        rank_reduced,
        rank_ambient,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RankScanRecord {
    pub t: f64,
    pub point: Vec<f64>,
    pub rank_ambient: usize,
    pub rank_orthogonal: usize,
    pub rank_reduced: usize,
    pub drop_detected: bool,
    pub identity_violated: bool,
    /// Max |entry| change of the reduced anchor from the previous grid
    /// point; smoothness diagnostic for the induced bivector.
    pub reduced_increment: f64,
}

/// A path t -> p(t) given by one expression per ambient coordinate over
/// the single variable `t`.
pub struct ParamPath {
    fields: Vec<ScalarField>,
}

impl ParamPath {
    pub fn new(exprs: Vec<crate::expr::Expr>) -> Result<Self, SubmanifoldError> {
        let t_chart = Chart::new(["t"]).expect("static chart");
        let fields = exprs
            .into_iter()
            .map(|e| ScalarField::new(t_chart.clone(), e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ParamPath { fields })
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        self.fields.iter().map(|f| f.eval(&[t])).collect()
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }
}

/// Uniform grid of `count >= 2` values on [a, b].
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Rank scan along a path on the submanifold. Records ambient,
/// pi-orthogonal, and induced ranks per grid point; a drop is flagged
/// where the induced rank falls below the max of its grid neighbors.
pub fn rank_scan(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    path: &ParamPath,
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<Vec<RankScanRecord>, RankLabError> {
    assert_eq!(path.dim(), n.chart().dim(), "path dimension mismatch");
    let mut records = Vec::with_capacity(t_grid.len());
    let mut prev_reduced: Option<nalgebra::DMatrix<f64>> = None;
    for &t in t_grid {
        let p = path.eval(t)?;
        let deviation = n.deviation(&p)?;
        if deviation > tol.manifold_tol {
            return Err(RankLabError::PathLeavesManifold { t, deviation });
        }
        let identity = rank_identity_check(pi, n, &p, tol)?;
        let reduced = induced_bivector_graph(pi, n, &p, tol)?.reduced_anchor;
        let reduced_increment = match &prev_reduced {
            Some(prev) => (&reduced - prev).abs().max(),
            None => 0.0,
        };
        prev_reduced = Some(reduced);
        records.push(RankScanRecord {
            t,
            point: p,
            rank_ambient: identity.rank_ambient,
            rank_orthogonal: identity.rank_orthogonal,
            rank_reduced: identity.rank_reduced,
            drop_detected: false,
            identity_violated: !identity.holds,
            reduced_increment,
        });
    }
    // A drop at t0 is a rank strictly below the max of the neighboring
    // grid ranks.
    let ranks: Vec<usize> = records.iter().map(|r| r.rank_reduced).collect();
    for i in 0..records.len() {
        let mut neighbor_max = 0usize;
        if i > 0 {
            neighbor_max = neighbor_max.max(ranks[i - 1]);
        }
        if i + 1 < ranks.len() {
            neighbor_max = neighbor_max.max(ranks[i + 1]);
        }
        records[i].drop_detected = ranks[i] < neighbor_max;
    }
    Ok(records)
}

#[derive(Debug, Clone, Serialize)]
pub struct SemicontinuityReport {
    pub ok: bool,
    /// Grid indices where the ambient rank exceeds both neighbors: an
    /// isolated up-jump, which smoothness of the bivector forbids.
    pub violations: Vec<usize>,
}

/// Lower-semicontinuity check on a scan: rank may drop at isolated
/// points but may not spike above both neighbors.
pub fn semicontinuity_check(records: &[RankScanRecord]) -> SemicontinuityReport {
    let mut violations = Vec::new();
    for i in 1..records.len().saturating_sub(1) {
        let r = records[i].rank_ambient;
        if r > records[i - 1].rank_ambient && r > records[i + 1].rank_ambient {
            violations.push(i);
        }
    }
    SemicontinuityReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoregularReport {
    /// True when the pi-orthogonal rank is constant across the samples;
    /// a sampled verdict, i.e. "no counterexample found".
    pub coregular: bool,
    pub rank_histogram: BTreeMap<usize, usize>,
}

/// Constant-rank check for the pi-orthogonal over a sample set.
pub fn coregular_check(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    samples: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<CoregularReport, RankLabError> {
    assert!(!samples.is_empty());
    let mut histogram = BTreeMap::new();
    for p in samples {
        let orth = pi_orthogonal(pi, n, p, tol)?;
        *histogram.entry(orth.dim()).or_insert(0usize) += 1;
    }
    Ok(CoregularReport {
        coregular: histogram.len() == 1,
        rank_histogram: histogram,
    })
}
