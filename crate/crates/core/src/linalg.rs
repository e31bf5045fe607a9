//! Small dense linear-algebra helpers shared by the geometry and solver code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative singular-value threshold used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the orthogonal complement of `span(a)`.
///
/// `a` is `n x r` with full column rank. The result is `n x (n - r)` and comes
/// from the trailing columns of a full Householder QR of `[a | 0]`.
pub fn orthonormal_complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = a.shape();
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    if r >= n {
        return DMatrix::zeros(n, 0);
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.columns_mut(0, r).copy_from(a);
    let q = padded.qr().q();
    q.columns(r, n - r).into_owned()
}

/// Singular values of `m`, in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical row rank of `m` with threshold `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_TOL * smax).count()
}

pub fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite)
}

/// Solves `(a a^T) x = b` for a full-row-rank `a`.
pub fn solve_gram(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = cholesky(a * a.transpose())?;
    Ok(chol.solve(b))
}

/// Minimum-norm solution of `(a a^T) x = b`, tolerating dependent rows.
pub fn solve_gram_pinv(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Ok(chol) = cholesky(a * a.transpose()) {
        return Ok(chol.solve(b));
    }
    let gram = a * a.transpose();
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .map_err(|_| Error::NotPositiveDefinite)
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Stacks matrices with equal column count vertically.
pub fn vstack(blocks: &[&DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}
