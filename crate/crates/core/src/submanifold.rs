//! Constraint submanifolds in split form `{(sigma, c): c = 0}` and graph
//! form `{(x, y): y = y0(x)}`, plus the pointwise linear algebra built on
//! them: tangent spaces, annihilators, pi-orthogonals, and the
//! classification tests (kernel nesting, Poisson-Dirac, Poisson
//! transversal).
//!
//! Geometric queries require the point to lie on the submanifold within
//! tolerance; nothing is projected. For a graph `N`, with `J = Dy0(p)`:
//!
//! * tangent columns pair each x-direction `e_i` with `J e_i`,
//! * annihilator columns pair each y-covector `f_j` with `-J^T f_j`,
//! * the pi-orthogonal is the column space of `M * annihilator`.
//!
//! Poisson-Dirac holds at `p` when tangent and pi-orthogonal intersect
//! only in zero; a Poisson transversal additionally has
//! `T_pN + Im M = R^n`.

use crate::chart::Chart;
use crate::expr::{BindError, EvalError, ScalarField};
use crate::linalg;
use crate::poisson::BivectorField;
use crate::tol::Tolerances;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubmanifoldError {
    #[error("indices must form a disjoint partition of 0..{n}: {reason}")]
    BadPartition { n: usize, reason: String },
    #[error("point is off the submanifold: deviation {deviation} exceeds tolerance {tol}")]
    OffManifold { deviation: f64, tol: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bind(#[from] BindError),
}

fn check_partition(n: usize, a: &[usize], b: &[usize]) -> Result<(), SubmanifoldError> {
    let mut seen = vec![false; n];
    for &i in a.iter().chain(b.iter()) {
        if i >= n {
            return Err(SubmanifoldError::BadPartition {
                n,
                reason: format!("index {i} out of range"),
            });
        }
        if seen[i] {
            return Err(SubmanifoldError::BadPartition {
                n,
                reason: format!("index {i} repeated"),
            });
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(SubmanifoldError::BadPartition {
            n,
            reason: "partition does not cover the chart".to_string(),
        });
    }
    Ok(())
}

/// Constraint set `{(sigma, c): c = 0}` described by an index partition
/// of the chart.
#[derive(Debug, Clone)]
pub struct SplitConstraint {
    chart: Arc<Chart>,
    sigma_indices: Vec<usize>,
    c_indices: Vec<usize>,
}

impl SplitConstraint {
    pub fn new(
        chart: Arc<Chart>,
        sigma_indices: Vec<usize>,
        c_indices: Vec<usize>,
    ) -> Result<Self, SubmanifoldError> {
        check_partition(chart.dim(), &sigma_indices, &c_indices)?;
        if c_indices.is_empty() {
            return Err(SubmanifoldError::BadPartition {
                n: chart.dim(),
                reason: "need at least one constraint coordinate".to_string(),
            });
        }
        Ok(SplitConstraint {
            chart,
            sigma_indices,
            c_indices,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn sigma_indices(&self) -> &[usize] {
        &self.sigma_indices
    }

    pub fn c_indices(&self) -> &[usize] {
        &self.c_indices
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma_indices.len()
    }

    pub fn n_c(&self) -> usize {
        self.c_indices.len()
    }

    /// Max |c(p)|.
    pub fn deviation(&self, p: &[f64]) -> f64 {
        self.c_indices
            .iter()
            .map(|&i| p[i].abs())
            .fold(0.0, f64::max)
    }

    /// The same constraint set presented as the zero graph over the
    /// sigma block.
    pub fn to_zero_graph(&self) -> GraphSubmanifold {
        let x_chart = Chart::new(
            self.sigma_indices
                .iter()
                .map(|&i| self.chart.name(i).to_string()),
        )
        .expect("sigma block is a valid chart");
        let y0 = self
            .c_indices
            .iter()
            .map(|_| ScalarField::constant(x_chart.clone(), 0.0))
            .collect();
        GraphSubmanifold {
            chart: self.chart.clone(),
            x_indices: self.sigma_indices.clone(),
            y_indices: self.c_indices.clone(),
            x_chart,
            y0,
        }
    }

    /// Embed a sigma-block point as the ambient point with c = 0.
    pub fn lift(&self, sigma: &[f64]) -> Vec<f64> {
        assert_eq!(sigma.len(), self.n_sigma());
        let mut p = vec![0.0; self.chart.dim()];
        for (k, &i) in self.sigma_indices.iter().enumerate() {
            p[i] = sigma[k];
        }
        p
    }
}

/// Constraint set given as the graph of `y0: X -> Y` between coordinate
/// blocks; `y0` expressions may reference only x-block names.
#[derive(Debug, Clone)]
pub struct GraphSubmanifold {
    chart: Arc<Chart>,
    x_indices: Vec<usize>,
    y_indices: Vec<usize>,
    x_chart: Arc<Chart>,
    y0: Vec<ScalarField>,
}

impl GraphSubmanifold {
    pub fn new(
        chart: Arc<Chart>,
        x_indices: Vec<usize>,
        y_indices: Vec<usize>,
        y0_exprs: Vec<crate::expr::Expr>,
    ) -> Result<Self, SubmanifoldError> {
        check_partition(chart.dim(), &x_indices, &y_indices)?;
        if y_indices.len() != y0_exprs.len() {
            return Err(SubmanifoldError::BadPartition {
                n: chart.dim(),
                reason: format!(
                    "{} graph expressions for {} y coordinates",
                    y0_exprs.len(),
                    y_indices.len()
                ),
            });
        }
        let x_chart = Chart::new(x_indices.iter().map(|&i| chart.name(i).to_string()))
            .expect("x block is a valid chart");
        let y0 = y0_exprs
            .into_iter()
            .map(|e| ScalarField::new(x_chart.clone(), e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GraphSubmanifold {
            chart,
            x_indices,
            y_indices,
            x_chart,
            y0,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn x_chart(&self) -> &Arc<Chart> {
        &self.x_chart
    }

    pub fn x_indices(&self) -> &[usize] {
        &self.x_indices
    }

    pub fn y_indices(&self) -> &[usize] {
        &self.y_indices
    }

    pub fn n_x(&self) -> usize {
        self.x_indices.len()
    }

    pub fn n_y(&self) -> usize {
        self.y_indices.len()
    }

    pub fn y0(&self) -> &[ScalarField] {
        &self.y0
    }

    pub fn x_part(&self, p: &[f64]) -> Vec<f64> {
        self.x_indices.iter().map(|&i| p[i]).collect()
    }

    /// Max |y(p) - y0(x(p))|.
    pub fn deviation(&self, p: &[f64]) -> Result<f64, EvalError> {
        let x = self.x_part(p);
        let mut dev: f64 = 0.0;
        for (k, &yi) in self.y_indices.iter().enumerate() {
            dev = dev.max((p[yi] - self.y0[k].eval(&x)?).abs());
        }
        Ok(dev)
    }

    /// Embed an x-block point as the ambient point on the graph.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        assert_eq!(x.len(), self.n_x());
        let mut p = vec![0.0; self.chart.dim()];
        for (k, &i) in self.x_indices.iter().enumerate() {
            p[i] = x[k];
        }
        for (k, &i) in self.y_indices.iter().enumerate() {
            p[i] = self.y0[k].eval(x)?;
        }
        Ok(p)
    }

    /// Jacobian `Dy0(p)` (n_y x n_x), by symbolic differentiation.
    pub fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let x = self.x_part(p);
        let mut j = DMatrix::zeros(self.n_y(), self.n_x());
        for (r, f) in self.y0.iter().enumerate() {
            for (c, name) in self.x_chart.names().iter().enumerate() {
                let d = f
                    .differentiate(name)
                    .expect("x name is a coordinate of the x chart");
                j[(r, c)] = d.eval(&x)?;
            }
        }
        Ok(j)
    }
}

/// Either presentation of a constraint set.
#[derive(Debug, Clone)]
pub enum ConstraintSet {
    Split(SplitConstraint),
    Graph(GraphSubmanifold),
}

impl ConstraintSet {
    pub fn chart(&self) -> &Arc<Chart> {
        match self {
            ConstraintSet::Split(s) => s.chart(),
            ConstraintSet::Graph(g) => g.chart(),
        }
    }

    /// Graph presentation: identity for graphs, zero graph for splits.
    pub fn as_graph(&self) -> GraphSubmanifold {
        match self {
            ConstraintSet::Split(s) => s.to_zero_graph(),
            ConstraintSet::Graph(g) => g.clone(),
        }
    }

    pub fn deviation(&self, p: &[f64]) -> Result<f64, EvalError> {
        match self {
            ConstraintSet::Split(s) => Ok(s.deviation(p)),
            ConstraintSet::Graph(g) => g.deviation(p),
        }
    }
}

/// Membership test at tolerance `tol` (max constraint violation).
pub fn on_manifold(n: &ConstraintSet, p: &[f64], tol: f64) -> Result<bool, EvalError> {
    Ok(n.deviation(p)? <= tol)
}

fn require_on_manifold(
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<(), SubmanifoldError> {
    let deviation = n.deviation(p)?;
    if deviation > tol.manifold_tol {
        return Err(SubmanifoldError::OffManifold {
            deviation,
            tol: tol.manifold_tol,
        });
    }
    Ok(())
}

/// A subspace of R^n at a base point: columns form a basis (possibly
/// empty), independent at the recorded rank tolerance.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub point: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub rank_eps: f64,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn new(point: &[f64], basis: DMatrix<f64>, rank_eps: f64) -> Self {
        debug_assert_eq!(linalg::rank(&basis, rank_eps), basis.ncols());
        Subspace {
            point: point.to_vec(),
            basis,
            rank_eps,
        }
    }
}

/// Tangent space of the graph: column k is the ambient vector with
/// x-part `e_k` and y-part `J e_k`.
pub fn tangent_basis(
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<Subspace, SubmanifoldError> {
    require_on_manifold(n, p, tol)?;
    let j = n.jacobian(p)?;
    let dim = n.chart().dim();
    let mut basis = DMatrix::zeros(dim, n.n_x());
    for k in 0..n.n_x() {
        basis[(n.x_indices()[k], k)] = 1.0;
        for (r, &yi) in n.y_indices().iter().enumerate() {
            basis[(yi, k)] = j[(r, k)];
        }
    }
    Ok(Subspace::new(p, basis, tol.rank_eps))
}

/// Annihilator of the tangent space: column k is the ambient covector
/// with y-part `f_k` and x-part `-J^T f_k`.
pub fn annihilator_basis(
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<Subspace, SubmanifoldError> {
    require_on_manifold(n, p, tol)?;
    let j = n.jacobian(p)?;
    let dim = n.chart().dim();
    let mut basis = DMatrix::zeros(dim, n.n_y());
    for k in 0..n.n_y() {
        basis[(n.y_indices()[k], k)] = 1.0;
        for (c, &xi) in n.x_indices().iter().enumerate() {
            basis[(xi, k)] = -j[(k, c)];
        }
    }
    Ok(Subspace::new(p, basis, tol.rank_eps))
}

/// Frame matrices of a graph point used by the extension machinery:
/// `V` (n_y x n) maps an ambient vector to its tangency violation
/// `v_y - J v_x`, and `G` (n x n_y) maps a y-covector `Theta` to the
/// ambient covector `(-J^T Theta, Theta)`. The columns of `G` are
/// exactly the annihilator basis.
pub fn graph_frames(
    n: &GraphSubmanifold,
    p: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>), EvalError> {
    let j = n.jacobian(p)?;
    let dim = n.chart().dim();
    let n_y = n.n_y();
    let mut v = DMatrix::zeros(n_y, dim);
    for (r, &yi) in n.y_indices().iter().enumerate() {
        v[(r, yi)] = 1.0;
        for (c, &xi) in n.x_indices().iter().enumerate() {
            v[(r, xi)] = -j[(r, c)];
        }
    }
    let mut g = DMatrix::zeros(dim, n_y);
    for k in 0..n_y {
        g[(n.y_indices()[k], k)] = 1.0;
        for (c, &xi) in n.x_indices().iter().enumerate() {
            g[(xi, k)] = -j[(k, c)];
        }
    }
    Ok((v, g))
}

/// `(T_pN)^{pi-perp}`: the image of the annihilator under the anchor,
/// reduced to an independent basis by SVD at the shared rank tolerance.
pub fn pi_orthogonal(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<Subspace, SubmanifoldError> {
    let ann = annihilator_basis(n, p, tol)?;
    let m = pi.anchor_matrix(p)?;
    let image = &m * &ann.basis;
    let basis = linalg::column_space(&image, tol.rank_eps);
    Ok(Subspace::new(p, basis, tol.rank_eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PdVerdict {
    pub is_pd: bool,
    pub intersection_dim: usize,
}

/// Pointwise Poisson-Dirac test: `T_pN ∩ (T_pN)^{pi-perp} = {0}`,
/// decided by rank arithmetic on the concatenated bases.
pub fn check_pd_condition(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<PdVerdict, SubmanifoldError> {
    let tangent = tangent_basis(n, p, tol)?;
    let orth = pi_orthogonal(pi, n, p, tol)?;
    let dim = linalg::intersection_dim(&tangent.basis, &orth.basis, tol.rank_eps);
    Ok(PdVerdict {
        is_pd: dim == 0,
        intersection_dim: dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransversalVerdict {
    pub is_transversal: bool,
    pub sum_rank: usize,
}

/// Poisson transversal test: Poisson-Dirac plus
/// `rank [tangent | anchor] = n`.
pub fn check_transversal(
    pi: &BivectorField,
    n: &GraphSubmanifold,
    p: &[f64],
    tol: &Tolerances,
) -> Result<TransversalVerdict, SubmanifoldError> {
    let pd = check_pd_condition(pi, n, p, tol)?;
    let tangent = tangent_basis(n, p, tol)?;
    let m = pi.anchor_matrix(p)?;
    let sum_rank = linalg::rank(&linalg::hcat(&tangent.basis, &m), tol.rank_eps);
    Ok(TransversalVerdict {
        is_transversal: pd.is_pd && sum_rank == n.chart().dim(),
        sum_rank,
    })
}

#[derive(Debug, Clone)]
pub struct KernelNestingVerdict {
    pub nested: bool,
    /// A kernel covector of {c,c} violating ker {c,c} ⊆ ker {sigma,c},
    /// when one exists.
    pub witness: Option<DVector<f64>>,
    pub max_violation: f64,
}

/// Extract the blocks `{c,c}` and `{sigma,c}` of the anchor matrix.
/// The anchor blocks of a split constraint: ({c,c}, {sigma,c}, {sigma,sigma}).
pub type SplitBlocks = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

pub fn constraint_blocks(
    pi: &BivectorField,
    s: &SplitConstraint,
    p: &[f64],
) -> Result<SplitBlocks, EvalError> {
    let m = pi.anchor_matrix(p)?;
    let n_c = s.n_c();
    let n_s = s.n_sigma();
    let mut cc = DMatrix::zeros(n_c, n_c);
    for a in 0..n_c {
        for b in 0..n_c {
            cc[(a, b)] = m[(s.c_indices()[a], s.c_indices()[b])];
        }
    }
    let mut sc = DMatrix::zeros(n_s, n_c);
    for a in 0..n_s {
        for b in 0..n_c {
            sc[(a, b)] = m[(s.sigma_indices()[a], s.c_indices()[b])];
        }
    }
    let mut ss = DMatrix::zeros(n_s, n_s);
    for a in 0..n_s {
        for b in 0..n_s {
            ss[(a, b)] = m[(s.sigma_indices()[a], s.sigma_indices()[b])];
        }
    }
    Ok((cc, sc, ss))
}

/// Solvability test `ker {c,c} ⊆ ker {sigma,c}` at a point of the
/// constraint set.
pub fn check_kernel_nesting(
    pi: &BivectorField,
    s: &SplitConstraint,
    p: &[f64],
    tol: &Tolerances,
) -> Result<KernelNestingVerdict, SubmanifoldError> {
    let deviation = s.deviation(p);
    if deviation > tol.manifold_tol {
        return Err(SubmanifoldError::OffManifold {
            deviation,
            tol: tol.manifold_tol,
        });
    }
    let (cc, sc, _) = constraint_blocks(pi, s, p)?;
    let kernel = linalg::nullspace(&cc, tol.rank_eps);
    let scale = 1.0 + sc.abs().max();
    let mut worst: Option<(f64, DVector<f64>)> = None;
    for k in 0..kernel.ncols() {
        let v: DVector<f64> = kernel.column(k).into();
        let violation = (&sc * &v).abs().max();
        if violation > tol.solve_tol * scale {
            match &worst {
                Some((w, _)) if *w >= violation => {}
                _ => worst = Some((violation, v)),
            }
        }
    }
    Ok(match worst {
        Some((violation, v)) => KernelNestingVerdict {
            nested: false,
            witness: Some(v),
            max_violation: violation,
        },
        None => KernelNestingVerdict {
            nested: true,
            witness: None,
            max_violation: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr};

    fn lv4() -> BivectorField {
        let c = Chart::new(["x", "y", "z", "w"]).unwrap();
        BivectorField::from_upper(
            c,
            [
                ((0, 1), parse("x*y").unwrap()),
                ((0, 3), parse("x*w").unwrap()),
                ((1, 2), parse("y*z").unwrap()),
                ((2, 3), parse("z*w").unwrap()),
            ],
        )
        .unwrap()
    }

    fn lv_graph() -> GraphSubmanifold {
        let chart = Chart::new(["x", "y", "z", "w"]).unwrap();
        GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3],
            vec![parse("x").unwrap(), parse("y").unwrap()],
        )
        .unwrap()
    }

    fn canonical4() -> BivectorField {
        let c = Chart::new(["q1", "p1", "q2", "p2"]).unwrap();
        BivectorField::from_upper(c, [((0, 1), Expr::Num(1.0)), ((2, 3), Expr::Num(1.0))]).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn membership() {
        let g = ConstraintSet::Graph(lv_graph());
        assert!(on_manifold(&g, &[2.0, 3.0, 2.0, 3.0], 1e-9).unwrap());
        assert!(!on_manifold(&g, &[2.0, 3.0, 2.0, 4.0], 1e-9).unwrap());

        let c4 = canonical4();
        let split = SplitConstraint::new(c4.chart().clone(), vec![0, 1], vec![2, 3]).unwrap();
        assert!(on_manifold(&ConstraintSet::Split(split), &[1.0, 1.0, 0.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn lv_tangent_columns() {
        let n = lv_graph();
        let t = tangent_basis(&n, &[2.0, 3.0, 2.0, 3.0], &tol()).unwrap();
        assert_eq!(
            t.basis,
            DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0])
        );
    }

    #[test]
    fn zero_graph_tangent_is_x_block() {
        let chart = Chart::new(["a", "b", "c"]).unwrap();
        let n = GraphSubmanifold::new(chart, vec![0, 1], vec![2], vec![Expr::Num(0.0)]).unwrap();
        let t = tangent_basis(&n, &[0.5, -0.5, 0.0], &tol()).unwrap();
        assert_eq!(
            t.basis,
            DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        let a = annihilator_basis(&n, &[0.5, -0.5, 0.0], &tol()).unwrap();
        assert_eq!(a.basis, DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn fast_slow_tangent_jacobian() {
        let chart = Chart::new(["q", "p", "a", "b"]).unwrap();
        let n = GraphSubmanifold::new(
            chart,
            vec![0, 1],
            vec![2, 3],
            vec![parse("q^2").unwrap(), parse("p^2").unwrap()],
        )
        .unwrap();
        let t = tangent_basis(&n, &[1.0, 1.0, 1.0, 1.0], &tol()).unwrap();
        assert_eq!(
            t.basis,
            DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 2.0])
        );
    }

    #[test]
    fn annihilator_pairs_to_zero_with_tangent() {
        let n = lv_graph();
        let p = [2.0, 3.0, 2.0, 3.0];
        let t = tangent_basis(&n, &p, &tol()).unwrap();
        let a = annihilator_basis(&n, &p, &tol()).unwrap();
        assert_eq!(
            a.basis,
            DMatrix::from_column_slice(4, 2, &[-1.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0])
        );
        let pairing = (a.basis.transpose() * &t.basis).abs().max();
        assert!(pairing <= 1e-12);
        // dim T + dim annihilator = n
        assert_eq!(t.dim() + a.dim(), 4);
    }

    #[test]
    fn lv_pi_orthogonal_dimensions() {
        let pi = lv4();
        let n = lv_graph();
        let o = pi_orthogonal(&pi, &n, &[1.0, 1.0, 1.0, 1.0], &tol()).unwrap();
        assert_eq!(o.dim(), 2);
        // Span is the (y, z) coordinate plane: e_y and e_z directions.
        for col in 0..2 {
            assert!(o.basis[(0, col)].abs() < 1e-12);
            assert!(o.basis[(3, col)].abs() < 1e-12);
        }
        let o0 = pi_orthogonal(&pi, &n, &[0.0; 4], &tol()).unwrap();
        assert_eq!(o0.dim(), 0);
    }

    #[test]
    fn lagrangian_graph_is_its_own_orthogonal() {
        let pi = canonical4();
        let n = GraphSubmanifold::new(
            pi.chart().clone(),
            vec![0, 1],
            vec![2, 3],
            vec![parse("p1").unwrap(), parse("q1").unwrap()],
        )
        .unwrap();
        let p = [0.7, -0.2, -0.2, 0.7];
        let o = pi_orthogonal(&pi, &n, &p, &tol()).unwrap();
        assert_eq!(o.dim(), 2);
        let t = tangent_basis(&n, &p, &tol()).unwrap();
        assert_eq!(linalg::intersection_dim(&t.basis, &o.basis, 1e-12), 2);

        let pd = check_pd_condition(&pi, &n, &p, &tol()).unwrap();
        assert_eq!(
            pd,
            PdVerdict {
                is_pd: false,
                intersection_dim: 2
            }
        );
    }

    #[test]
    fn lv_pd_and_transversal_verdicts() {
        let pi = lv4();
        let n = lv_graph();
        let t = tol();

        let pd = check_pd_condition(&pi, &n, &[1.0; 4], &t).unwrap();
        assert!(pd.is_pd && pd.intersection_dim == 0);
        let pd0 = check_pd_condition(&pi, &n, &[0.0; 4], &t).unwrap();
        assert!(pd0.is_pd, "zero anchor makes the orthogonal trivial");

        let tv = check_transversal(&pi, &n, &[1.0; 4], &t).unwrap();
        assert!(tv.is_transversal && tv.sum_rank == 4);
        let tv0 = check_transversal(&pi, &n, &[0.0; 4], &t).unwrap();
        assert!(!tv0.is_transversal);
        assert_eq!(tv0.sum_rank, 2);
    }

    #[test]
    fn canonical_split_is_transversal_everywhere() {
        let pi = canonical4();
        let split = SplitConstraint::new(pi.chart().clone(), vec![0, 1], vec![2, 3]).unwrap();
        let graph = split.to_zero_graph();
        let t = tol();
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..20 {
            let sigma = rng.point(2, -2.0, 2.0);
            let p = split.lift(&sigma);
            let v = check_transversal(&pi, &graph, &p, &t).unwrap();
            assert!(v.is_transversal);
        }
    }

    #[test]
    fn kernel_nesting_cases() {
        let t = tol();

        // All-Casimir constraint block: trivially nested.
        let chart = Chart::new(["q", "p", "c1", "c2"]).unwrap();
        let pi = BivectorField::from_upper(chart.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let s = SplitConstraint::new(chart, vec![0, 1], vec![2, 3]).unwrap();
        let v = check_kernel_nesting(&pi, &s, &[1.0, 1.0, 0.0, 0.0], &t).unwrap();
        assert!(v.nested && v.witness.is_none());

        // Invertible {c,c}: kernel is zero, nested.
        let pi4 = canonical4();
        let s4 = SplitConstraint::new(pi4.chart().clone(), vec![0, 1], vec![2, 3]).unwrap();
        let v = check_kernel_nesting(&pi4, &s4, &[0.3, 0.8, 0.0, 0.0], &t).unwrap();
        assert!(v.nested);

        // R^3 counterexample: pi^{sigma c1} = 1 only.
        let c3 = Chart::new(["s", "c1", "c2"]).unwrap();
        let bad = BivectorField::from_upper(c3.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let s3 = SplitConstraint::new(c3, vec![0], vec![1, 2]).unwrap();
        let v = check_kernel_nesting(&bad, &s3, &[2.0, 0.0, 0.0], &t).unwrap();
        assert!(!v.nested);
        let w = v.witness.unwrap();
        // Witness is (up to sign) the first constraint covector.
        assert!((w[0].abs() - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
        assert!((v.max_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nesting_agrees_with_pd_on_zero_graph() {
        let t = tol();
        // Counterexample system: verdicts must agree (both negative).
        let c3 = Chart::new(["s", "c1", "c2"]).unwrap();
        let bad = BivectorField::from_upper(c3.clone(), [((0, 1), Expr::Num(1.0))]).unwrap();
        let s3 = SplitConstraint::new(c3, vec![0], vec![1, 2]).unwrap();
        let graph = s3.to_zero_graph();
        let mut rng = crate::rng::SplitMix64::new(8);
        for _ in 0..50 {
            let p = [rng.range(-2.0, 2.0), 0.0, 0.0];
            let nest = check_kernel_nesting(&bad, &s3, &p, &t).unwrap();
            let pd = check_pd_condition(&bad, &graph, &p, &t).unwrap();
            assert_eq!(nest.nested, pd.is_pd);
            assert!(!nest.nested);
        }
        // Positive case: canonical4 split.
        let pi4 = canonical4();
        let s4 = SplitConstraint::new(pi4.chart().clone(), vec![0, 1], vec![2, 3]).unwrap();
        let graph4 = s4.to_zero_graph();
        for _ in 0..50 {
            let p = s4.lift(&rng.point(2, -2.0, 2.0));
            let nest = check_kernel_nesting(&pi4, &s4, &p, &t).unwrap();
            let pd = check_pd_condition(&pi4, &graph4, &p, &t).unwrap();
            assert_eq!(nest.nested, pd.is_pd);
            assert!(nest.nested);
        }
    }

    #[test]
    fn off_manifold_points_are_rejected() {
        let n = lv_graph();
        let err = tangent_basis(&n, &[1.0, 1.0, 1.0, 2.0], &tol()).unwrap_err();
        assert!(matches!(err, SubmanifoldError::OffManifold { .. }));
    }

    #[test]
    fn transversal_implies_pd_at_samples() {
        let pi = lv4();
        let n = lv_graph();
        let t = tol();
        let mut rng = crate::rng::SplitMix64::new(77);
        for _ in 0..50 {
            let x = rng.point(2, -2.0, 2.0);
            let p = n.lift(&x).unwrap();
            let tv = check_transversal(&pi, &n, &p, &t).unwrap();
            let pd = check_pd_condition(&pi, &n, &p, &t).unwrap();
            if tv.is_transversal {
                assert!(pd.is_pd);
            }
        }
    }
}
