//! Formal epsilon-power-series bivectors and order-by-order slow-manifold
//! reduction on fast-slow systems.
//!
//! A series represents `eps^s * pi_eps = sum_i eps^i pi_i` (default
//! `s = 2`), so the fast block sits at order 0 and instantiating at a
//! concrete epsilon scales coefficient `i` by `eps^(i-s)`.
//!
//! For a graph constraint with frames `V` (tangency violation) and `G`
//! (annihilator injection), writing `A_i` for the coefficient anchors at
//! a point:
//!
//! * The Poisson-Dirac condition is checked perturbatively. Covector
//!   towers `sum eps^i G gamma_i` whose anchor image is tangent order by
//!   order form the nullspace of the block-Toeplitz operator with blocks
//!   `C_i = V A_i G`; the condition holds to order `k` exactly when every
//!   such tower has zero image under the anchor blocks through order `k`.
//!   Solvability at each order is governed by the kernel of the order-0
//!   block.
//! * Extensions `Theta = Theta^0 + eps Theta^1 + ...` solve, order by
//!   order, linear systems with the order-0 block `C_0` as matrix and
//!   lower-order contributions on the right side (least-norm per order,
//!   residual-checked).
//! * The reduced bracket collects `alpha~_i^T A alpha~_j` by epsilon
//!   order. Because the ambient anchor carries `eps^{-s}`, extension
//!   coefficients up to order `K + s` feed the reduced coefficients
//!   through order `K`; the assembly solves that far internally.

use crate::chart::Chart;
use crate::expr::{EvalError, Expr};
use crate::linalg;
use crate::poisson::{BivectorField, PoissonError};
use crate::submanifold::{graph_frames, GraphSubmanifold, SubmanifoldError};
use crate::tol::Tolerances;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("epsilon = 0 is singular for scale exponent {scale_exponent} > 0")]
    ScalingSingular { scale_exponent: i32 },
    #[error("'eps' is reserved and may not name a chart coordinate")]
    ReservedEpsName,
    #[error("coefficient {index} lives on a different chart")]
    ChartMismatch { index: usize },
    #[error("series fails the Poisson-Dirac condition at order {failing_order}")]
    NotPdAtOrder { failing_order: usize },
    #[error("order-{order} extension solve failed with residual {residual:.3e}")]
    OrderSolveFailed { order: usize, residual: f64 },
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Truncated formal series of bivector fields.
#[derive(Debug, Clone)]
pub struct EpsBivectorSeries {
    chart: Arc<Chart>,
    coefficients: Vec<BivectorField>,
    scale_exponent: i32,
}

impl EpsBivectorSeries {
    pub fn new(
        chart: Arc<Chart>,
        coefficients: Vec<BivectorField>,
        scale_exponent: i32,
    ) -> Result<Self, SeriesError> {
        if chart.index_of("eps").is_some() {
            return Err(SeriesError::ReservedEpsName);
        }
        assert!(!coefficients.is_empty(), "need at least one coefficient");
        for (index, c) in coefficients.iter().enumerate() {
            if c.chart() != &chart {
                return Err(SeriesError::ChartMismatch { index });
            }
        }
        Ok(EpsBivectorSeries {
            chart,
            coefficients,
            scale_exponent,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn coefficients(&self) -> &[BivectorField] {
        &self.coefficients
    }

    pub fn scale_exponent(&self) -> i32 {
        self.scale_exponent
    }

    /// Anchor matrix of coefficient `i` at `p` (zero beyond the
    /// truncation).
    fn anchor(&self, i: usize, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.chart.dim();
        match self.coefficients.get(i) {
            Some(c) => c.anchor_matrix(p),
            None => Ok(DMatrix::zeros(n, n)),
        }
    }

    /// Concrete bivector with entries `sum_i eps^(i-s) * pi_i`.
    pub fn instantiate(&self, epsilon: f64) -> Result<BivectorField, SeriesError> {
        if epsilon == 0.0 && self.scale_exponent > 0 {
            return Err(SeriesError::ScalingSingular {
                scale_exponent: self.scale_exponent,
            });
        }
        let n = self.chart.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let mut sum = Expr::Num(0.0);
                for (k, coeff) in self.coefficients.iter().enumerate() {
                    let factor = epsilon.powi(k as i32 - self.scale_exponent);
                    sum = Expr::add(sum, Expr::mul(Expr::Num(factor), coeff.entry_expr(i, j)));
                }
                entries.push(((i, j), sum));
            }
        }
        Ok(BivectorField::from_upper(self.chart.clone(), entries)?)
    }
}

/// Matrix coefficients by epsilon order, uniform dimensions.
#[derive(Debug, Clone)]
pub struct EpsSeriesMatrix {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl EpsSeriesMatrix {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Evaluate the truncated series at a concrete epsilon.
    pub fn evaluate(&self, epsilon: f64) -> DMatrix<f64> {
        let mut out = self.coeffs[0].clone();
        let mut power = 1.0;
        for c in &self.coeffs[1..] {
            power *= epsilon;
            out += c * power;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesPdReport {
    pub pd_to_order: bool,
    pub failing_order: Option<usize>,
}

struct PointData {
    anchors: Vec<DMatrix<f64>>,
    v: DMatrix<f64>,
    g: DMatrix<f64>,
    n_x: usize,
    n_y: usize,
    dim: usize,
    x_hat: DMatrix<f64>,
}

fn point_data(
    series: &EpsBivectorSeries,
    n: &GraphSubmanifold,
    p: &[f64],
    max_order: usize,
) -> Result<PointData, SeriesError> {
    let (v, g) = graph_frames(n, p)?;
    let dim = n.chart().dim();
    let mut anchors = Vec::with_capacity(max_order + 1);
    for i in 0..=max_order {
        anchors.push(series.anchor(i, p)?);
    }
    let mut x_hat = DMatrix::zeros(dim, n.n_x());
    for (col, &xi) in n.x_indices().iter().enumerate() {
        x_hat[(xi, col)] = 1.0;
    }
    Ok(PointData {
        anchors,
        v,
        g,
        n_x: n.n_x(),
        n_y: n.n_y(),
        dim,
        x_hat,
    })
}

/// Perturbative Poisson-Dirac check to order `k_max`. Returns the first
/// failing order, if any: the lowest order at which some tangent anchor
/// image of an annihilator-covector tower is nonzero.
pub fn series_pd_check(
    series: &EpsBivectorSeries,
    n: &GraphSubmanifold,
    p: &[f64],
    k_max: usize,
    tol: &Tolerances,
) -> Result<SeriesPdReport, SeriesError> {
    let deviation = n.deviation(p)?;
    if deviation > tol.manifold_tol {
        return Err(SubmanifoldError::OffManifold {
            deviation,
            tol: tol.manifold_tol,
        }
        .into());
    }
    let data = point_data(series, n, p, k_max)?;
    let n_y = data.n_y;
    if n_y == 0 {
        return Ok(SeriesPdReport {
            pd_to_order: true,
            failing_order: None,
        });
    }
    // C_i = V A_i G (tangency of images), AW_i = A_i G (the images).
    let c_blocks: Vec<DMatrix<f64>> = data.anchors.iter().map(|a| &data.v * a * &data.g).collect();
    let aw_blocks: Vec<DMatrix<f64>> = data.anchors.iter().map(|a| a * &data.g).collect();
    let scale = 1.0 + aw_blocks.iter().map(|m| m.abs().max()).fold(0.0, f64::max);

    for k in 0..=k_max {
        let rows = (k + 1) * n_y;
        let mut toeplitz = DMatrix::zeros(rows, rows);
        for r in 0..=k {
            for c in 0..=r {
                let block = &c_blocks[r - c];
                toeplitz
                    .view_mut((r * n_y, c * n_y), (n_y, n_y))
                    .copy_from(block);
            }
        }
        let kernel = linalg::nullspace(&toeplitz, tol.rank_eps);
        if kernel.ncols() == 0 {
            continue;
        }
        let mut image_op = DMatrix::zeros((k + 1) * data.dim, rows);
        for r in 0..=k {
            for c in 0..=r {
                image_op
                    .view_mut((r * data.dim, c * n_y), (data.dim, n_y))
                    .copy_from(&aw_blocks[r - c]);
            }
        }
        let images = image_op * kernel;
        if images.abs().max() > tol.solve_tol * scale {
            return Ok(SeriesPdReport {
                pd_to_order: false,
                failing_order: Some(k),
            });
        }
    }
    Ok(SeriesPdReport {
        pd_to_order: true,
        failing_order: None,
    })
}

/// Order-by-order tangency solve for the extension coefficients
/// `Theta^0 ... Theta^K`; coefficient `k` is an `n_y x n_x` matrix whose
/// column `i` extends the i-th x covector.
pub fn series_extension_solve(
    series: &EpsBivectorSeries,
    n: &GraphSubmanifold,
    p: &[f64],
    k_max: usize,
    tol: &Tolerances,
) -> Result<EpsSeriesMatrix, SeriesError> {
    let pd = series_pd_check(series, n, p, k_max, tol)?;
    if let Some(failing_order) = pd.failing_order {
        return Err(SeriesError::NotPdAtOrder { failing_order });
    }
    solve_extensions_unchecked(series, n, p, k_max, tol)
}

fn solve_extensions_unchecked(
    series: &EpsBivectorSeries,
    n: &GraphSubmanifold,
    p: &[f64],
    k_max: usize,
    tol: &Tolerances,
) -> Result<EpsSeriesMatrix, SeriesError> {
    let data = point_data(series, n, p, k_max)?;
    let (n_x, n_y) = (data.n_x, data.n_y);
    let c_blocks: Vec<DMatrix<f64>> = data.anchors.iter().map(|a| &data.v * a * &data.g).collect();
    // rhs_k = V A_k X_hat: the inhomogeneous (alpha-hat) part per order.
    let rhs_blocks: Vec<DMatrix<f64>> = data
        .anchors
        .iter()
        .map(|a| &data.v * a * &data.x_hat)
        .collect();

    let mut thetas: Vec<DMatrix<f64>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut rhs = -rhs_blocks[k].clone();
        for i in 1..=k {
            rhs -= &c_blocks[i] * &thetas[k - i];
        }
        let mut theta_k = DMatrix::zeros(n_y, n_x);
        for col in 0..n_x {
            let b: DVector<f64> = rhs.column(col).into();
            let (x, residual) = linalg::least_norm_solve(&c_blocks[0], &b, tol.rank_eps);
            if residual > tol.solve_tol * (1.0 + b.norm()) {
                return Err(SeriesError::OrderSolveFailed { order: k, residual });
            }
            theta_k.set_column(col, &x);
        }
        thetas.push(theta_k);
    }
    Ok(EpsSeriesMatrix { coeffs: thetas })
}

/// Reduced anchor coefficients `[R_0, ..., R_K]`: the reduced bracket of
/// the instantiated bivector is `sum_k eps^k R_k + O(eps^{K+1})`.
pub fn series_reduced_bivector(
    series: &EpsBivectorSeries,
    n: &GraphSubmanifold,
    p: &[f64],
    k_max: usize,
    tol: &Tolerances,
) -> Result<EpsSeriesMatrix, SeriesError> {
    let s = series.scale_exponent.max(0) as usize;
    let ext_order = k_max + s;
    let pd = series_pd_check(series, n, p, k_max, tol)?;
    if let Some(failing_order) = pd.failing_order {
        return Err(SeriesError::NotPdAtOrder { failing_order });
    }
    let thetas = solve_extensions_unchecked(series, n, p, ext_order, tol)?;
    let data = point_data(series, n, p, ext_order)?;
    let n_x = data.n_x;

    // Extension covectors by order: order 0 includes the alpha-hat part.
    let mut ext: Vec<DMatrix<f64>> = Vec::with_capacity(ext_order + 1);
    for (a, theta) in thetas.coeffs.iter().enumerate() {
        let mut cols = &data.g * theta;
        if a == 0 {
            cols += &data.x_hat;
        }
        ext.push(cols);
    }

    let mut reduced: Vec<DMatrix<f64>> = Vec::with_capacity(k_max + 1);
    for m in 0..=k_max {
        let total = m + s;
        let mut r_m = DMatrix::zeros(n_x, n_x);
        for a in 0..=total {
            if a > ext_order {
                continue;
            }
            for k in 0..=(total - a) {
                let b = total - a - k;
                if b > ext_order || k >= data.anchors.len() {
                    continue;
                }
                r_m += ext[a].transpose() * &data.anchors[k] * &ext[b];
            }
        }
        let scale = 1.0 + r_m.abs().max();
        debug_assert!(
            (&r_m + r_m.transpose()).abs().max() <= 1e-12 * scale,
            "reduced coefficient {m} must be skew"
        );
        reduced.push(r_m);
    }
    Ok(EpsSeriesMatrix { coeffs: reduced })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::reduction::dirac_bracket;
    use crate::submanifold::SplitConstraint;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn toy_chart() -> Arc<Chart> {
        Chart::new(["q", "p", "a", "b"]).unwrap()
    }

    /// eps^2 pi_eps with {a,b} = 1 at order 0 and {q,p} = 1 at order 2.
    fn toy_series() -> EpsBivectorSeries {
        let chart = toy_chart();
        let pi0 = BivectorField::from_upper(chart.clone(), [((2, 3), Expr::Num(1.0))]).unwrap();
        let pi1 = BivectorField::from_upper(chart.clone(), []).unwrap();
        let pi2 = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        EpsBivectorSeries::new(chart, vec![pi0, pi1, pi2], 2).unwrap()
    }

    fn toy_graph() -> GraphSubmanifold {
        GraphSubmanifold::new(
            toy_chart(),
            vec![0, 1],
            vec![2, 3],
            vec![parse("q^2").unwrap(), parse("p^2").unwrap()],
        )
        .unwrap()
    }

    fn toy_shifted_split(eps: f64) -> (BivectorField, SplitConstraint) {
        let series = toy_series();
        let pi = series.instantiate(eps).unwrap();
        let target = Chart::new(["q", "p", "c1", "c2"]).unwrap();
        let fwd = [
            parse("q").unwrap(),
            parse("p").unwrap(),
            parse("a-q^2").unwrap(),
            parse("b-p^2").unwrap(),
        ];
        let inv = [
            parse("q").unwrap(),
            parse("p").unwrap(),
            parse("c1+q^2").unwrap(),
            parse("c2+p^2").unwrap(),
        ];
        let shifted =
            crate::poisson::pushforward_bivector(&pi, target, &fwd, &inv, &tol()).unwrap();
        let split = SplitConstraint::new(shifted.chart().clone(), vec![0, 1], vec![2, 3]).unwrap();
        (shifted, split)
    }

    #[test]
    fn instantiate_scales_blocks() {
        let series = toy_series();
        let pi = series.instantiate(0.1).unwrap();
        let m = pi.anchor_matrix(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((m[(2, 3)] - 100.0).abs() < 1e-9);
        assert!((m[(0, 1)] - 1.0).abs() < 1e-12);

        let err = series.instantiate(0.0).unwrap_err();
        assert!(matches!(err, SeriesError::ScalingSingular { .. }));
    }

    #[test]
    fn degenerate_series_instantiates_to_its_top_coefficient() {
        let chart = Chart::new(["q", "p"]).unwrap();
        let zero = BivectorField::from_upper(chart.clone(), []).unwrap();
        let pi2 = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let series = EpsBivectorSeries::new(chart, vec![zero.clone(), zero, pi2], 2).unwrap();
        for eps in [0.5, 0.1, 0.037] {
            let m = series
                .instantiate(eps)
                .unwrap()
                .anchor_matrix(&[0.2, -0.4])
                .unwrap();
            assert!((m[(0, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reserved_eps_name_rejected() {
        let chart = Chart::new(["eps", "p"]).unwrap();
        let pi = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let err = EpsBivectorSeries::new(chart, vec![pi], 2).unwrap_err();
        assert!(matches!(err, SeriesError::ReservedEpsName));
    }

    #[test]
    fn toy_is_pd_to_order_four() {
        let series = toy_series();
        let n = toy_graph();
        let p = n.lift(&[1.0, 1.0]).unwrap();
        let r = series_pd_check(&series, &n, &p, 4, &tol()).unwrap();
        assert!(r.pd_to_order, "failing order {:?}", r.failing_order);
    }

    #[test]
    fn pi0_only_in_top_slot_reduces_to_plain_pd_check() {
        // pi_0 = pi_1 = 0, pi_2 canonical on all four coordinates: the
        // order-k condition involves only C_2 applied to gamma_{k-2}, the
        // plain pointwise check on pi_2.
        let chart = Chart::new(["q1", "p1", "q2", "p2"]).unwrap();
        let zero = BivectorField::from_upper(chart.clone(), []).unwrap();
        let pi2 = BivectorField::from_upper(
            chart.clone(),
            [((0, 1), Expr::Num(1.0)), ((2, 3), Expr::Num(1.0))],
        )
        .unwrap();
        let series =
            EpsBivectorSeries::new(chart.clone(), vec![zero.clone(), zero, pi2], 2).unwrap();

        // Zero graph: pi_2-PD holds, series check passes.
        let n_ok = GraphSubmanifold::new(
            chart.clone(),
            vec![0, 1],
            vec![2, 3],
            vec![Expr::Num(0.0), Expr::Num(0.0)],
        )
        .unwrap();
        let p = [0.3, 0.7, 0.0, 0.0];
        assert!(
            series_pd_check(&series, &n_ok, &p, 4, &tol())
                .unwrap()
                .pd_to_order
        );

        // Lagrangian graph: pi_2-PD fails; first failure where pi_2 enters.
        let n_bad = GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3],
            vec![parse("p1").unwrap(), parse("q1").unwrap()],
        )
        .unwrap();
        let p = [0.3, 0.7, 0.7, 0.3];
        let r = series_pd_check(&series, &n_bad, &p, 4, &tol()).unwrap();
        assert_eq!(r.failing_order, Some(2));
    }

    #[test]
    fn constructed_failure_at_order_one() {
        // pi_0 = 0 annihilates the fast annihilator; pi_1 = {q,a} maps it
        // onto a nonzero tangent direction: the order-1 equation acquires
        // a nonzero tangent-intersection solution.
        let chart = toy_chart();
        let zero = BivectorField::from_upper(chart.clone(), []).unwrap();
        let pi1 = BivectorField::from_upper(chart.clone(), [((0, 2), Expr::Num(1.0))]).unwrap();
        let series = EpsBivectorSeries::new(chart.clone(), vec![zero, pi1], 2).unwrap();
        let n = GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3],
            vec![Expr::Num(0.0), Expr::Num(0.0)],
        )
        .unwrap();
        let p = [1.0, -1.0, 0.0, 0.0];
        let r = series_pd_check(&series, &n, &p, 4, &tol()).unwrap();
        assert_eq!(r.failing_order, Some(1));

        let err = series_extension_solve(&series, &n, &p, 2, &tol()).unwrap_err();
        assert!(matches!(
            err,
            SeriesError::NotPdAtOrder { failing_order: 1 }
        ));
    }

    #[test]
    fn toy_extension_coefficients() {
        let series = toy_series();
        let n = toy_graph();
        let (q, p_) = (1.0, 1.0);
        let p = n.lift(&[q, p_]).unwrap();
        let thetas = series_extension_solve(&series, &n, &p, 4, &tol()).unwrap();
        // No order-0 correction: pi_0 has no slow-fast coupling.
        assert!(thetas.coeffs[0].abs().max() < 1e-14, "Theta^0 = 0");
        assert!(thetas.coeffs[1].abs().max() < 1e-14, "Theta^1 = 0");
        // Theta^2 columns: (2p, 0) for e_q and (0, 2q) for e_p.
        let t2 = &thetas.coeffs[2];
        let expected = DMatrix::from_row_slice(2, 2, &[2.0 * p_, 0.0, 0.0, 2.0 * q]);
        assert!((t2 - expected).abs().max() < 1e-12, "Theta^2 = {t2}");
    }

    #[test]
    fn product_zero_graph_needs_no_extension() {
        let chart = Chart::new(["q", "p", "a", "b"]).unwrap();
        let pi0 = BivectorField::from_upper(chart.clone(), [((2, 3), Expr::Num(1.0))]).unwrap();
        let pi2 = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let series = EpsBivectorSeries::new(chart.clone(), vec![pi0, pi2.clone(), pi2], 2).unwrap();
        let n = GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3],
            vec![Expr::Num(0.0), Expr::Num(0.0)],
        )
        .unwrap();
        let thetas = series_extension_solve(&series, &n, &[0.5, 0.5, 0.0, 0.0], 4, &tol()).unwrap();
        for t in &thetas.coeffs {
            assert!(t.abs().max() < 1e-14);
        }
    }

    #[test]
    fn toy_reduced_series_coefficients() {
        let series = toy_series();
        let n = toy_graph();
        let p = n.lift(&[1.0, 1.0]).unwrap();
        let reduced = series_reduced_bivector(&series, &n, &p, 4, &tol()).unwrap();
        // Closed form 1/(1 + eps^2 J) with J = 4qp = 4: coefficients
        // 1, 0, -4, 0, 16.
        let expect = [1.0, 0.0, -4.0, 0.0, 16.0];
        for (k, e) in expect.iter().enumerate() {
            let got = reduced.coeffs[k][(0, 1)];
            assert!((got - e).abs() < 1e-9, "R_{k} entry {got}, expected {e}");
            let skew = (&reduced.coeffs[k] + reduced.coeffs[k].transpose())
                .abs()
                .max();
            assert!(skew <= 1e-12 * (1.0 + reduced.coeffs[k].abs().max()));
        }
    }

    #[test]
    fn truncation_error_against_dirac_oracle() {
        let series = toy_series();
        let n = toy_graph();
        let x = [1.0, 1.0];
        let p = n.lift(&x).unwrap();

        let err_at = |k_max: usize, eps: f64| -> f64 {
            let reduced = series_reduced_bivector(&series, &n, &p, k_max, &tol()).unwrap();
            let truncated = reduced.evaluate(eps);
            let (pi, split) = toy_shifted_split(eps);
            let direct = dirac_bracket(&pi, &split, &split.lift(&x), &tol()).unwrap();
            (truncated - direct.reduced_anchor).abs().max()
        };

        // The closed form 1/(1 + 4 eps^2) is even in eps, so odd
        // coefficients vanish: truncating after an odd order K leaves a
        // first neglected term at order K+1 and the generic ratio law
        // log2(err(eps)/err(eps/2)) ~ K+1 holds.
        let (e1, e2) = (err_at(3, 1e-2), err_at(3, 5e-3));
        let ratio = (e1 / e2).log2();
        assert!(
            (ratio - 4.0).abs() <= 0.3,
            "K=3: log2 ratio {ratio}, errors {e1:.3e}/{e2:.3e}"
        );

        // Truncating after an even order coincides with the next odd
        // truncation (the odd coefficient is zero), so the decay is one
        // order faster than generic: K=2 measures ~2^4, not ~2^3.
        let (e1, e2) = (err_at(2, 1e-2), err_at(2, 5e-3));
        let ratio = (e1 / e2).log2();
        assert!(
            (ratio - 4.0).abs() <= 0.3,
            "K=2: log2 ratio {ratio}, errors {e1:.3e}/{e2:.3e}"
        );
    }

    #[test]
    fn kernel_freedom_does_not_change_reduced_series() {
        // Add a pi_0-Casimir fast coordinate: the order-0 block acquires
        // a kernel, and shifting any Theta^k along it must leave every
        // reduced coefficient unchanged.
        let chart = Chart::new(["q", "p", "a", "b", "c"]).unwrap();
        let pi0 = BivectorField::from_upper(chart.clone(), [((2, 3), Expr::Num(1.0))]).unwrap();
        let zero = BivectorField::from_upper(chart.clone(), []).unwrap();
        let pi2 = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let series = EpsBivectorSeries::new(chart.clone(), vec![pi0, zero, pi2], 2).unwrap();
        let n = GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3, 4],
            vec![parse("q^2").unwrap(), parse("p^2").unwrap(), Expr::Num(0.0)],
        )
        .unwrap();
        let p = n.lift(&[1.0, 1.0]).unwrap();
        let t = tol();
        let baseline = series_reduced_bivector(&series, &n, &p, 4, &t).unwrap();

        // Recompute the assembly with perturbed extensions.
        let s = series.scale_exponent().max(0) as usize;
        let thetas = series_extension_solve(&series, &n, &p, 4 + s, &t).unwrap();
        let data_anchors: Vec<DMatrix<f64>> =
            (0..=4 + s).map(|i| series.anchor(i, &p).unwrap()).collect();
        let (_, g) = graph_frames(&n, &p).unwrap();
        let mut x_hat = DMatrix::zeros(5, 2);
        x_hat[(0, 0)] = 1.0;
        x_hat[(1, 1)] = 1.0;

        let mut rng = crate::rng::SplitMix64::new(13);
        for _ in 0..5 {
            let mut perturbed = thetas.coeffs.clone();
            for t_k in perturbed.iter_mut() {
                for col in 0..t_k.ncols() {
                    // e_c spans ker C_0: c decouples from pi_0 entirely.
                    t_k[(2, col)] += rng.range(-1.0, 1.0);
                }
            }
            let ext: Vec<DMatrix<f64>> = perturbed
                .iter()
                .enumerate()
                .map(|(a, t_k)| {
                    let mut cols = &g * t_k;
                    if a == 0 {
                        cols += &x_hat;
                    }
                    cols
                })
                .collect();
            for m in 0..=4usize {
                let total = m + s;
                let mut r_m = DMatrix::zeros(2, 2);
                for a in 0..=total.min(4 + s) {
                    for k in 0..=(total - a) {
                        let b = total - a - k;
                        if b > 4 + s || k >= data_anchors.len() {
                            continue;
                        }
                        r_m += ext[a].transpose() * &data_anchors[k] * &ext[b];
                    }
                }
                let diff = (&r_m - &baseline.coeffs[m]).abs().max();
                assert!(diff <= 1e-10, "order {m} changed by {diff}");
            }
        }
    }

    #[test]
    fn instantiate_round_trip_matches_series() {
        let series = toy_series();
        let n = toy_graph();
        let x = [0.8, -0.6];
        let p = n.lift(&x).unwrap();
        let reduced = series_reduced_bivector(&series, &n, &p, 4, &tol()).unwrap();
        for eps in [0.05, 0.02, 0.01] {
            let truncated = reduced.evaluate(eps);
            let (pi, split) = toy_shifted_split(eps);
            let direct = dirac_bracket(&pi, &split, &split.lift(&x), &tol()).unwrap();
            let err = (truncated - direct.reduced_anchor).abs().max();
            let bound = eps.powi(5) * 100.0;
            assert!(err <= bound, "eps {eps}: err {err:.3e} > bound {bound:.3e}");
        }
    }
}
