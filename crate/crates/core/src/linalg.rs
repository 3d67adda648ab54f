//! Dense linear-algebra helpers shared by the solvers.
//!
//! Data matrices use `ndarray` with one sample per row. Decompositions of the
//! small square matrices go through `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: &ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
/// Eigenvectors are the columns of the returned matrix.
pub fn sym_eigh(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("sym_eigh", n, a.ncols()));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mut m = to_na(a);
    // symmetrize to remove accumulation asymmetry
    let mt = m.transpose();
    m = (m + mt) * 0.5;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in symmetric matrix".into()));
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Thin QR of an `m × k` matrix with `m >= k`; `R` has a non-negative diagonal.
pub fn thin_qr(a: &ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (m, k) = a.dim();
    if m < k {
        return Err(Error::InvalidArgument(format!(
            "thin QR needs rows >= cols, got {m}x{k}"
        )));
    }
    let qr = to_na(a).qr();
    let mut q = from_na(&qr.q());
    let mut r = from_na(&qr.r());
    for j in 0..k {
        if r[[j, j]] < 0.0 {
            r.row_mut(j).mapv_inplace(|v| -v);
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok((q, r))
}

/// Column means.
pub fn mean_rows(x: &ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows().max(1) as f64;
    x.sum_axis(Axis(0)) / n
}

/// `x - mean` broadcast over rows.
pub fn center(x: &ArrayView2<f64>, mean: &ArrayView1<f64>) -> Array2<f64> {
    let mut c = x.to_owned();
    c -= mean;
    c
}

/// Scatter matrix `XcᵀXc` of already centered data.
pub fn scatter(xc: &ArrayView2<f64>) -> Array2<f64> {
    xc.t().dot(xc)
}

/// Solves the symmetric positive (semi)definite system `A X = B` through the
/// eigendecomposition of `A`, ignoring directions below `rel_tol · λ_max`.
pub fn sym_solve(a: &ArrayView2<f64>, b: &ArrayView2<f64>, rel_tol: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eigh(a)?;
    let max = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return Err(Error::Numeric("singular system".into()));
    }
    let inv_diag = vals.mapv(|v| if v > rel_tol * max { 1.0 / v } else { 0.0 });
    let vtb = vecs.t().dot(b);
    let scaled = &vtb * &inv_diag.insert_axis(Axis(1));
    Ok(vecs.dot(&scaled))
}

/// Number of eigenvalues above `rel_tol · λ_max`.
pub fn numerical_rank(vals: &ArrayView1<f64>, rel_tol: f64) -> usize {
    let max = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Pearson correlation of two equally long vectors. Zero when either is
/// constant.
pub fn correlation(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Ordinary least squares `targets ≈ inputs Mᵀ + b`; returns `(M, b)`.
pub fn affine_least_squares(inputs: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let k = inputs.ncols();
    let in_mean = mean_rows(inputs);
    let out_mean = mean_rows(targets);
    if k == 0 {
        return Ok((Array2::zeros((targets.ncols(), 0)), out_mean));
    }
    let ic = center(inputs, &in_mean.view());
    let gram = ic.t().dot(&ic);
    let cross = ic.t().dot(targets);
    let mt = sym_solve(&gram.view(), &cross.view(), 1e-13)?;
    let m = mt.t().to_owned();
    let b = &out_mean - &m.dot(&in_mean);
    Ok((m, b))
}
