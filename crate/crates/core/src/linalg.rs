//! Small dense helpers shared by the numerical modules.
//!
//! Stacked vectors hold one block per sample (or edge); a sample block is a
//! `d1 x d2` matrix stored row-major.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scaled(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

/// Euclidean norm of the concatenation of two vectors.
pub fn joint_norm(a: &[f64], b: &[f64]) -> f64 {
    (norm_sq(a) + norm_sq(b)).sqrt()
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Reads a row-major block into a dense matrix.
pub fn block_to_matrix(block: &[f64], d1: usize, d2: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d1, d2, block)
}

/// Writes a dense matrix into a row-major block.
pub fn matrix_to_block(m: &DMatrix<f64>, out: &mut [f64]) {
    let (d1, d2) = m.shape();
    debug_assert_eq!(out.len(), d1 * d2);
    for r in 0..d1 {
        for c in 0..d2 {
            out[r * d2 + c] = m[(r, c)];
        }
    }
}

pub fn matrix_to_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    matrix_to_block(m, &mut out);
    out
}

/// Thin SVD with singular values sorted in descending order.
pub struct ThinSvd {
    /// `d1 x p` with orthonormal columns, `p = min(d1, d2)`.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `d2 x p` with orthonormal columns.
    pub v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Result<faer::Mat<f64>> {
    if let Some(i) = m.iter().position(|x| !x.is_finite()) {
        return Err(Error::Svd(format!("non-finite entry at position {i}")));
    }
    Ok(faer::Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)]))
}

fn descending(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order
}

// nalgebra's implicit-shift SVD returned factors off by 1e-2 on some
// rank-deficient 4x3 blocks, so decompositions go through faer.
pub fn thin_svd(m: DMatrix<f64>) -> Result<ThinSvd> {
    let f = to_faer(&m)?;
    let svd = f
        .thin_svd()
        .map_err(|e| Error::Svd(format!("{e:?}")))?;
    let (u0, v0) = (svd.U(), svd.V());
    let s0: Vec<f64> = (0..u0.ncols()).map(|k| svd.S()[k]).collect();
    let order = descending(&s0);
    let u = DMatrix::from_fn(u0.nrows(), order.len(), |r, c| u0[(r, order[c])]);
    let v = DMatrix::from_fn(v0.nrows(), order.len(), |r, c| v0[(r, order[c])]);
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&k| s0[k]));
    Ok(ThinSvd {
        u,
        singular_values,
        v,
    })
}

pub fn singular_values(m: DMatrix<f64>) -> Result<DVector<f64>> {
    let f = to_faer(&m)?;
    let mut s = f
        .singular_values()
        .map_err(|e| Error::Svd(format!("{e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

/// Best rank-`r` approximation in Frobenius norm.
pub fn truncate_rank(m: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (d1, d2) = m.shape();
    let svd = thin_svd(m.clone())?;
    let keep = r.min(svd.singular_values.len());
    let mut out = DMatrix::zeros(d1, d2);
    for k in 0..keep {
        let s = svd.singular_values[k];
        if s == 0.0 {
            continue;
        }
        out += s * svd.u.column(k) * svd.v.column(k).transpose();
    }
    Ok(out)
}

/// Numerical rank: count of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m.clone())?;
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m.clone())?.sum())
}
