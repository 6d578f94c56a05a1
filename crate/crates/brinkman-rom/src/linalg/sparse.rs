//! Compressed sparse row matrices.

use super::{DMat, DVec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sparse matrix in compressed row storage. Column indices are strictly
/// increasing within each row and exact zeros are dropped at finalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// Set when the builder was told the matrix is symmetric by construction.
    symmetric: bool,
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        b.finish_symmetric()
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut b = TripletBuilder::new(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            b.add(i, i, d);
        }
        b.finish_symmetric()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &DVec) -> DVec {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        let mut y = DVec::zeros(self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn mul_transpose_vec(&self, x: &DVec) -> DVec {
        assert_eq!(x.len(), self.n_rows, "transpose matvec dimension mismatch");
        let mut y = DVec::zeros(self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// Dense product A * B where B is a dense matrix (columns treated
    /// independently).
    pub fn mul_dense(&self, b: &DMat) -> DMat {
        assert_eq!(b.nrows(), self.n_cols);
        let mut out = DMat::zeros(self.n_rows, b.ncols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for k in 0..b.ncols() {
                let mut acc = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += v * b[(j, k)];
                }
                out[(i, k)] = acc;
            }
        }
        out
    }

    /// x^T A y (bilinear form).
    pub fn bilinear(&self, x: &DVec, y: &DVec) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut row_acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                row_acc += v * y[j];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for j in 0..self.n_cols {
            row_ptr[j + 1] = row_ptr[j] + counts[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let slot = next[j];
                col_idx[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Maximum |A_ij - A_ji| over the stored pattern; 0 means exactly
    /// symmetric values.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let mut defect: f64 = 0.0;
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = t.row(i);
            // Merge the two sorted rows.
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                match (ca.get(p), cb.get(q)) {
                    (Some(&ja), Some(&jb)) if ja == jb => {
                        defect = defect.max((va[p] - vb[q]).abs());
                        p += 1;
                        q += 1;
                    }
                    (Some(&ja), Some(&jb)) if ja < jb => {
                        defect = defect.max(va[p].abs());
                        p += 1;
                    }
                    (Some(_), Some(_)) => {
                        defect = defect.max(vb[q].abs());
                        q += 1;
                    }
                    (Some(_), None) => {
                        defect = defect.max(va[p].abs());
                        p += 1;
                    }
                    (None, Some(_)) => {
                        defect = defect.max(vb[q].abs());
                        q += 1;
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        defect
    }

    pub fn to_dense(&self) -> DMat {
        let mut m = DMat::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// For every stored entry of `self`, the position of the same (row, col)
    /// in `union`'s storage. `None` if `self` has an entry outside `union`'s
    /// pattern. Supports affine sums over a shared sparsity skeleton.
    pub fn index_map_into(&self, union: &CsrMatrix) -> Option<Vec<usize>> {
        if self.n_rows != union.n_rows || self.n_cols != union.n_cols {
            return None;
        }
        let mut map = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            let base = union.row_ptr[i];
            let ucols = &union.col_idx[base..union.row_ptr[i + 1]];
            for &j in cols {
                let pos = ucols.binary_search(&j).ok()?;
                map.push(base + pos);
            }
        }
        Some(map)
    }

    /// Validate the CSR invariants (strictly increasing columns, no stored
    /// zeros, finite values).
    pub fn check_invariants(&self) -> Result<()> {
        if self.row_ptr.len() != self.n_rows + 1 {
            return Err(Error::ShapeMismatch {
                context: "csr row_ptr".into(),
                expected: format!("{}", self.n_rows + 1),
                got: format!("{}", self.row_ptr.len()),
            });
        }
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Parse(format!(
                        "row {i}: column indices not strictly increasing"
                    )));
                }
            }
            if cols.iter().any(|&j| j >= self.n_cols) {
                return Err(Error::Parse(format!("row {i}: column index out of range")));
            }
            if vals.iter().any(|v| !v.is_finite() || *v == 0.0) {
                return Err(Error::Parse(format!("row {i}: zero or non-finite entry")));
            }
        }
        Ok(())
    }
}

/// Accumulates (row, col, value) triplets and compresses them into CSR,
/// summing duplicates and dropping exact zeros.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn merge(&mut self, other: TripletBuilder) {
        debug_assert_eq!(self.n_rows, other.n_rows);
        debug_assert_eq!(self.n_cols, other.n_cols);
        self.entries.extend(other.entries);
    }

    pub fn finish(self) -> CsrMatrix {
        self.finish_with_flag(false)
    }

    pub fn finish_symmetric(self) -> CsrMatrix {
        self.finish_with_flag(true)
    }

    fn finish_with_flag(mut self, symmetric: bool) -> CsrMatrix {
        // Stable deterministic compression: sort by (row, col); within a
        // duplicate group the insertion order is preserved so accumulation is
        // reproducible run to run.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut iter = self.entries.into_iter().peekable();
        for row in 0..self.n_rows {
            while let Some(&(r, c, _)) = iter.peek() {
                if r != row {
                    break;
                }
                let mut acc = 0.0;
                while let Some(&(r2, c2, v2)) = iter.peek() {
                    if r2 == row && c2 == c {
                        acc += v2;
                        iter.next();
                    } else {
                        break;
                    }
                }
                if acc != 0.0 {
                    col_idx.push(c);
                    values.push(acc);
                }
            }
            row_ptr[row + 1] = col_idx.len();
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }
}
