//! Poisson bivector fields on coordinate charts.
//!
//! Convention used throughout this crate: `{x^i, x^j} = pi^{ij}`, and the
//! anchor matrix is `M[i][j] = pi^{ij}(p)`, so a single upper-triangle
//! entry carries each coordinate bracket once. Hamiltonian vector fields
//! are `X_H = M * grad H`, brackets are `{f, g} = grad f^T M grad g`, and
//! the Jacobi identity is checked through the cyclic residual
//!
//! ```text
//! J^{ijk} = sum_l [ pi^{li} d_l pi^{jk} + pi^{lj} d_l pi^{ki} + pi^{lk} d_l pi^{ij} ]
//! ```
//!
//! which vanishes identically for Poisson structures.

use crate::chart::Chart;
use crate::expr::{BindError, EvalError, Expr, ScalarField};
use crate::rng::SplitMix64;
use crate::tol::Tolerances;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("entry ({i},{j}): {source}")]
    EntryBind {
        i: usize,
        j: usize,
        source: BindError,
    },
    #[error("bivector not skew at sample {point:?}: |pi[{i}][{j}] + pi[{j}][{i}]| = {violation}")]
    NotSkew {
        i: usize,
        j: usize,
        point: Vec<f64>,
        violation: f64,
    },
    #[error("diagonal entry ({i},{i}) must be identically zero")]
    DiagonalNotZero { i: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("map is not inverse of forward map: round-trip residual {residual} at {point:?}")]
    BadInverse { residual: f64, point: Vec<f64> },
    #[error("{0}")]
    Bind(#[from] BindError),
}

/// A Poisson bivector: a chart plus the upper-triangle entries
/// `pi^{ij} = {x^i, x^j}` for `i < j`. The lower triangle is the exact
/// negation, so anchor matrices are skew by construction.
#[derive(Debug, Clone)]
pub struct BivectorField {
    chart: Arc<Chart>,
    /// Entry (i, j) for i < j, stored row-major over the strict upper triangle.
    upper: Vec<ScalarField>,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // Offset of row i in the packed strict upper triangle.
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl BivectorField {
    /// Build from the strict upper triangle; skewness holds by construction.
    pub fn from_upper(
        chart: Arc<Chart>,
        entries: impl IntoIterator<Item = ((usize, usize), Expr)>,
    ) -> Result<Self, PoissonError> {
        let n = chart.dim();
        let mut upper: Vec<Option<ScalarField>> = vec![None; n * (n - 1) / 2];
        for ((i, j), expr) in entries {
            assert!(
                i < j && j < n,
                "upper-triangle index ({i},{j}) out of range"
            );
            let field = ScalarField::new(chart.clone(), expr)
                .map_err(|source| PoissonError::EntryBind { i, j, source })?;
            upper[upper_index(n, i, j)] = Some(field);
        }
        let upper = upper
            .into_iter()
            .map(|f| f.unwrap_or_else(|| zero_field(&chart)))
            .collect();
        Ok(BivectorField { chart, upper })
    }

    /// Build from a full n x n expression matrix, validating skewness at
    /// seeded sample points and requiring identically zero diagonal
    /// entries.
    pub fn from_matrix(
        chart: Arc<Chart>,
        matrix: Vec<Vec<Expr>>,
        tol: &Tolerances,
    ) -> Result<Self, PoissonError> {
        let n = chart.dim();
        assert_eq!(matrix.len(), n);
        for (i, row) in matrix.iter().enumerate() {
            assert_eq!(row.len(), n);
            if !matches!(row[i], Expr::Num(v) if v == 0.0) {
                return Err(PoissonError::DiagonalNotZero { i });
            }
        }
        let mut fields = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for j in (i + 1)..n {
                let upper_f = ScalarField::new(chart.clone(), matrix[i][j].clone())
                    .map_err(|source| PoissonError::EntryBind { i, j, source })?;
                let lower_f = ScalarField::new(chart.clone(), matrix[j][i].clone())
                    .map_err(|source| PoissonError::EntryBind { i: j, j: i, source })?;
                let mut rng = SplitMix64::new(0);
                for _ in 0..200 {
                    let p = rng.point(n, -2.0, 2.0);
                    let (a, b) = match (upper_f.eval(&p), lower_f.eval(&p)) {
                        (Ok(a), Ok(b)) => (a, b),
                        // Skip points outside an entry's domain.
                        _ => continue,
                    };
                    let scale = 1.0 + a.abs().max(b.abs());
                    if (a + b).abs() > tol.skew_tol * scale {
                        return Err(PoissonError::NotSkew {
                            i,
                            j,
                            point: p,
                            violation: (a + b).abs(),
                        });
                    }
                }
                fields.push(upper_f);
            }
        }
        Ok(BivectorField {
            chart,
            upper: fields,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// The entry expression `{x^i, x^j}` (negated for i > j, zero on the
    /// diagonal).
    pub fn entry_expr(&self, i: usize, j: usize) -> Expr {
        let n = self.chart.dim();
        if i == j {
            Expr::Num(0.0)
        } else if i < j {
            self.upper[upper_index(n, i, j)].expr().clone()
        } else {
            Expr::neg(self.upper[upper_index(n, j, i)].expr().clone())
        }
    }

    fn upper_entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.upper[upper_index(self.chart.dim(), i, j)]
    }

    /// Anchor matrix `M[i][j] = pi^{ij}(p)`; exactly skew because the lower
    /// triangle mirrors the upper with a sign.
    pub fn anchor_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.chart.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.upper_entry(i, j).eval(p)?;
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        Ok(m)
    }

    /// All partials `d_l pi^{ij}` for i < j, as bound fields; used by the
    /// Jacobiator scan so derivative trees are built once.
    fn upper_partials(&self) -> Vec<Vec<ScalarField>> {
        self.upper.iter().map(|f| f.gradient_fields()).collect()
    }

    /// `d_l pi^{ij}` evaluated at p, with the sign convention of
    /// [`BivectorField::entry_expr`].
    fn partial_at(
        partials: &[Vec<ScalarField>],
        n: usize,
        i: usize,
        j: usize,
        l: usize,
        p: &[f64],
    ) -> Result<f64, EvalError> {
        if i == j {
            Ok(0.0)
        } else if i < j {
            partials[upper_index(n, i, j)][l].eval(p)
        } else {
            Ok(-partials[upper_index(n, j, i)][l].eval(p)?)
        }
    }
}

fn zero_field(chart: &Arc<Chart>) -> ScalarField {
    ScalarField::constant(chart.clone(), 0.0)
}

/// `{f, g}(p) = grad f(p)^T M(p) grad g(p)` with symbolic gradients.
pub fn bracket_eval(
    pi: &BivectorField,
    f: &ScalarField,
    g: &ScalarField,
    p: &[f64],
) -> Result<f64, EvalError> {
    let m = pi.anchor_matrix(p)?;
    let gf = eval_gradient(f, p)?;
    let gg = eval_gradient(g, p)?;
    Ok((gf.transpose() * m * gg)[(0, 0)])
}

pub fn eval_gradient(f: &ScalarField, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let grads = f.gradient_fields();
    let mut out = DVector::zeros(grads.len());
    for (i, g) in grads.iter().enumerate() {
        out[i] = g.eval(p)?;
    }
    Ok(out)
}

/// Hamiltonian vector field `X_H(p) = M(p) * grad H(p)`.
pub fn hamiltonian_vector_field(
    pi: &BivectorField,
    h: &ScalarField,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    Ok(pi.anchor_matrix(p)? * eval_gradient(h, p)?)
}

/// Cyclic Jacobi residual for one index triple at one point.
pub fn jacobiator(
    pi: &BivectorField,
    p: &[f64],
    triple: (usize, usize, usize),
) -> Result<f64, EvalError> {
    let partials = pi.upper_partials();
    jacobiator_with(pi, &partials, p, triple)
}

fn jacobiator_with(
    pi: &BivectorField,
    partials: &[Vec<ScalarField>],
    p: &[f64],
    (i, j, k): (usize, usize, usize),
) -> Result<f64, EvalError> {
    assert!(i != j && j != k && i != k, "indices must be distinct");
    let n = pi.dim();
    let m = pi.anchor_matrix(p)?;
    let mut total = 0.0;
    for l in 0..n {
        let d_jk = BivectorField::partial_at(partials, n, j, k, l, p)?;
        let d_ki = BivectorField::partial_at(partials, n, k, i, l, p)?;
        let d_ij = BivectorField::partial_at(partials, n, i, j, l, p)?;
        total += m[(l, i)] * d_jk + m[(l, j)] * d_ki + m[(l, k)] * d_ij;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct JacobiScan {
    pub max_abs: f64,
    pub argmax_point: Vec<f64>,
    pub argmax_triple: (usize, usize, usize),
    pub triples: usize,
    pub points: usize,
}

/// Max |J^{ijk}| over all index triples and the supplied points.
pub fn jacobi_scan<'a>(
    pi: &BivectorField,
    points: impl IntoIterator<Item = &'a [f64]>,
) -> Result<JacobiScan, EvalError> {
    let n = pi.dim();
    let partials = pi.upper_partials();
    let mut scan = JacobiScan {
        max_abs: 0.0,
        argmax_point: vec![0.0; n],
        argmax_triple: (0, 1, 2.min(n.saturating_sub(1))),
        triples: 0,
        points: 0,
    };
    let mut triples = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                triples.push((i, j, k));
            }
        }
    }
    scan.triples = triples.len();
    for p in points {
        scan.points += 1;
        for &t in &triples {
            let v = jacobiator_with(pi, &partials, p, t)?.abs();
            if v > scan.max_abs {
                scan.max_abs = v;
                scan.argmax_point = p.to_vec();
                scan.argmax_triple = t;
            }
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone)]
pub struct CasimirVerdict {
    pub is_casimir: bool,
    pub max_residual: f64,
}

/// Sampled Casimir test: `f` is a Casimir when `|M grad f|_inf` stays
/// below tolerance at every sample. A sampled verdict can only report
/// that no counterexample was found.
pub fn is_casimir(
    pi: &BivectorField,
    f: &ScalarField,
    samples: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<CasimirVerdict, EvalError> {
    assert!(!samples.is_empty(), "need at least one sample");
    let mut max_residual: f64 = 0.0;
    for p in samples {
        let xf = hamiltonian_vector_field(pi, f, p)?;
        max_residual = max_residual.max(xf.amax());
    }
    Ok(CasimirVerdict {
        is_casimir: max_residual <= tol.casimir_tol,
        max_residual,
    })
}

/// Push a bivector forward through an invertible chart map.
///
/// `forward` maps source coordinates to `target` coordinates and
/// `inverse` maps back; both are supplied explicitly, no numerical
/// inversion is attempted. The round trip is validated at seeded sample
/// points before any expression is built. Entries of the result are
///
/// ```text
/// pi'^{ab}(x') = sum_ij dPhi^a/dx^i * pi^{ij} * dPhi^b/dx^j  at x = Phi^{-1}(x')
/// ```
///
/// realized as composed expressions over the target chart.
pub fn pushforward_bivector(
    pi: &BivectorField,
    target: Arc<Chart>,
    forward: &[Expr],
    inverse: &[Expr],
    tol: &Tolerances,
) -> Result<BivectorField, PoissonError> {
    let n = pi.dim();
    assert_eq!(forward.len(), n, "forward map must have {n} components");
    assert_eq!(target.dim(), n, "target chart must have dimension {n}");
    assert_eq!(inverse.len(), n, "inverse map must have {n} components");

    let fwd: Vec<ScalarField> = forward
        .iter()
        .map(|e| ScalarField::new(pi.chart().clone(), e.clone()))
        .collect::<Result<_, _>>()?;
    let inv: Vec<ScalarField> = inverse
        .iter()
        .map(|e| ScalarField::new(target.clone(), e.clone()))
        .collect::<Result<_, _>>()?;

    // Round-trip validation: |Phi^{-1}(Phi(p)) - p| at seeded samples.
    let mut rng = SplitMix64::new(0);
    for _ in 0..32 {
        let p = rng.point(n, -1.0, 1.0);
        let image: Result<Vec<f64>, _> = fwd.iter().map(|f| f.eval(&p)).collect();
        let Ok(image) = image else { continue };
        let back: Result<Vec<f64>, _> = inv.iter().map(|f| f.eval(&image)).collect();
        let Ok(back) = back else { continue };
        let residual = p
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual > 1e-9 {
            return Err(PoissonError::BadInverse { residual, point: p });
        }
    }

    // Substitution map x^k -> inverse^k(x').
    let subst: HashMap<String, Expr> = pi
        .chart()
        .names()
        .iter()
        .enumerate()
        .map(|(k, name)| (name.clone(), inverse[k].clone()))
        .collect();

    let jacobian: Vec<Vec<Expr>> = forward
        .iter()
        .map(|phi| {
            pi.chart()
                .names()
                .iter()
                .map(|x| phi.differentiate(x))
                .collect()
        })
        .collect();

    let mut entries = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let mut sum = Expr::Num(0.0);
            for i in 0..n {
                for j in 0..n {
                    let term = Expr::mul(
                        Expr::mul(jacobian[a][i].clone(), pi.entry_expr(i, j)),
                        jacobian[b][j].clone(),
                    );
                    sum = Expr::add(sum, term);
                }
            }
            entries.push(((a, b), sum.substitute(&subst)));
        }
    }
    let result = BivectorField::from_upper(target, entries)?;
    let _ = tol;
    Ok(result)
}
