//! SVD-based rank, nullspace, and least-norm solve helpers.
//!
//! Every rank decision in the crate flows through [`rank_threshold`], so
//! cross-module comparisons share one cut: singular values below
//! `max(nrows, ncols) * sigma_max * eps` (with an absolute floor of `eps`)
//! count as zero.

use nalgebra::{DMatrix, DVector};

/// Threshold below which a singular value counts as zero.
pub fn rank_threshold(nrows: usize, ncols: usize, sigma_max: f64, eps: f64) -> f64 {
    (nrows.max(ncols) as f64 * sigma_max * eps).max(eps)
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Numerical rank at tolerance `eps` (see [`rank_threshold`]).
pub fn rank(m: &DMatrix<f64>, eps: f64) -> usize {
    let sv = singular_values(m);
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let tau = rank_threshold(m.nrows(), m.ncols(), sigma_max, eps);
    sv.iter().filter(|s| **s > tau).count()
}

/// Condition number sigma_max / sigma_min of a square matrix
/// (infinity when the matrix is singular to machine precision).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis of the (right) nullspace of `m`.
///
/// The matrix is zero-padded to square first; nalgebra's SVD is thin, and
/// a wide matrix would otherwise hide part of its nullspace.
pub fn nullspace(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tau = rank_threshold(m.nrows(), n, sigma_max, eps);
    let cols: Vec<usize> = (0..v_t.nrows())
        .filter(|&i| svd.singular_values.get(i).copied().unwrap_or(0.0) <= tau)
        .collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        out.set_column(k, &v_t.row(i).transpose());
    }
    out
}

/// Orthonormal basis of the column space of `m` (empty for rank 0).
pub fn column_space(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let (nr, nc) = (m.nrows(), m.ncols());
    if nr == 0 || nc == 0 {
        return DMatrix::zeros(nr, 0);
    }
    let cols = nc.max(nr);
    let mut padded = DMatrix::zeros(nr, cols);
    padded.view_mut((0, 0), (nr, nc)).copy_from(m);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("u requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tau = rank_threshold(nr, nc, sigma_max, eps);
    let keep: Vec<usize> = (0..u.ncols())
        .filter(|&i| svd.singular_values.get(i).copied().unwrap_or(0.0) > tau)
        .collect();
    let mut out = DMatrix::zeros(nr, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Least-norm solution of `a x = b` via the SVD pseudoinverse, together
/// with the residual `|a x - b|_2`. The pseudoinverse is applied strictly
/// pointwise; a nonzero residual signals an inconsistent system.
pub fn least_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.norm());
    }
    if a.nrows() == 0 {
        return (DVector::zeros(a.ncols()), 0.0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tau = rank_threshold(a.nrows(), a.ncols(), sigma_max, eps);
    let mut x = DVector::zeros(a.ncols());
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i];
        if s > tau {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// dim(span A ∩ span B) = rank A + rank B - rank [A B].
pub fn intersection_dim(a: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64) -> usize {
    if a.ncols() == 0 || b.ncols() == 0 {
        return 0;
    }
    assert_eq!(a.nrows(), b.nrows());
    let ra = rank(a, eps);
    let rb = rank(b, eps);
    let mut joined = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    joined.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    joined
        .view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    let rj = rank(&joined, eps);
    (ra + rb).saturating_sub(rj)
}

/// Stack `[a | b]` column-wise.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}
