//! Inner-product-weighted Gram-Schmidt orthonormalization.

use super::sparse::CsrMatrix;
use super::{DMat, DVec};

/// Result of appending columns to a gram-orthonormal basis.
#[derive(Debug, Clone)]
pub struct AppendOutcome {
    pub basis: DMat,
    /// Indices (into the appended block) of columns dropped as numerically
    /// dependent.
    pub dropped: Vec<usize>,
}

/// Extend a gram-orthonormal basis with new columns, re-orthonormalizing with
/// two classical Gram-Schmidt passes per column. Columns whose post-projection
/// gram-norm falls below `drop_tol` times their pre-projection norm are
/// discarded and reported, not fatal.
pub fn orthonormalize_append(
    basis: &DMat,
    new_columns: &DMat,
    gram: &CsrMatrix,
    drop_tol: f64,
) -> AppendOutcome {
    let n = gram.n_rows();
    assert!(basis.ncols() == 0 || basis.nrows() == n, "basis shape");
    assert!(
        new_columns.ncols() == 0 || new_columns.nrows() == n,
        "new column shape"
    );
    let mut cols: Vec<DVec> = (0..basis.ncols())
        .map(|k| DVec::from_iterator(n, basis.column(k).iter().copied()))
        .collect();
    let mut dropped = Vec::new();
    for j in 0..new_columns.ncols() {
        let mut v = DVec::from_iterator(n, new_columns.column(j).iter().copied());
        let pre_norm = gram.bilinear(&v, &v).max(0.0).sqrt();
        if pre_norm == 0.0 {
            dropped.push(j);
            continue;
        }
        // classical-then-classical re-orthogonalization
        for _ in 0..2 {
            let gv = gram.mul_vec(&v);
            let coeffs: Vec<f64> = cols.iter().map(|b| b.dot(&gv)).collect();
            for (b, c) in cols.iter().zip(coeffs) {
                v -= b * c;
            }
        }
        let norm = gram.bilinear(&v, &v).max(0.0).sqrt();
        if norm < drop_tol * pre_norm {
            dropped.push(j);
        } else {
            cols.push(v / norm);
        }
    }
    let mut out = DMat::zeros(n, cols.len());
    for (k, c) in cols.iter().enumerate() {
        out.set_column(k, c);
    }
    AppendOutcome {
        basis: out,
        dropped,
    }
}
