//! Compressed sparse-column storage for the data matrix.
//!
//! Columns are the objects of interest throughout the pipeline (they are the
//! anchor candidates), so CSC is the native layout. A canonical matrix has
//! strictly increasing row indices within each column, a non-decreasing
//! column pointer array ending at `nnz`, and no stored zeros.

use crate::dense::DenseMatrix;
use crate::error::{Result, XrayError};

/// Immutable CSC matrix of 64-bit reals.
///
/// Construction goes through [`build_sparse`] (or the column-wise helpers),
/// which canonicalize their input; after that the matrix is safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Assemble a canonical CSC matrix from coordinate triples.
///
/// Duplicate `(row, col)` entries are summed; entries that sum to exactly
/// zero are dropped. Out-of-range indices are rejected with the offending
/// triple reported.
pub fn build_sparse(
    triples: &[(usize, usize, f64)],
    n_rows: usize,
    n_cols: usize,
) -> Result<SparseMatrix> {
    for &(row, col, value) in triples {
        if row >= n_rows || col >= n_cols {
            return Err(XrayError::TripleOutOfRange {
                row,
                col,
                value,
                n_rows,
                n_cols,
            });
        }
    }

    let mut sorted: Vec<(usize, usize, f64)> = triples.to_vec();
    sorted.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

    let mut col_ptr = vec![0usize; n_cols + 1];
    let mut row_idx = Vec::with_capacity(sorted.len());
    let mut values = Vec::with_capacity(sorted.len());

    let mut k = 0;
    while k < sorted.len() {
        let (row, col, mut sum) = sorted[k];
        k += 1;
        while k < sorted.len() && sorted[k].0 == row && sorted[k].1 == col {
            sum += sorted[k].2;
            k += 1;
        }
        if sum != 0.0 {
            row_idx.push(row);
            values.push(sum);
            col_ptr[col + 1] += 1;
        }
    }
    for c in 0..n_cols {
        col_ptr[c + 1] += col_ptr[c];
    }

    Ok(SparseMatrix {
        n_rows,
        n_cols,
        col_ptr,
        row_idx,
        values,
    })
}

impl SparseMatrix {
    /// Build from dense column vectors, skipping exact zeros.
    ///
    /// # Panics
    /// Panics if a column's length differs from `n_rows`.
    pub fn from_dense_columns(n_rows: usize, columns: &[Vec<f64>]) -> Self {
        let n_cols = columns.len();
        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for (j, column) in columns.iter().enumerate() {
            assert_eq!(column.len(), n_rows, "column {j} has wrong length");
            for (i, &v) in column.iter().enumerate() {
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        SparseMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Assemble directly from canonical CSC parts.
    ///
    /// Callers guarantee sorted, in-range, zero-free columns; this is checked
    /// only in debug builds.
    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let m = SparseMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        };
        debug_assert!(m.is_canonical());
        m
    }

    /// Empty matrix of the given shape.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    /// Number of stored entries in column `j`.
    #[inline]
    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Stored entry at `(row, col)`, or 0.0 when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (rows, vals) = self.col(col);
        match rows.binary_search(&row) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Coordinate-triple dump in column-major order.
    pub fn to_triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.n_cols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                out.push((i, j, v));
            }
        }
        out
    }

    /// Copy of column `j` as a dense vector.
    pub fn col_to_dense(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        let (rows, vals) = self.col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            out[i] = v;
        }
        out
    }

    /// Densify the selected columns into an `n_rows`-by-`indices.len()` matrix.
    pub fn cols_to_dense(&self, indices: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, indices.len());
        for (k, &j) in indices.iter().enumerate() {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                out.set(i, k, v);
            }
        }
        out
    }

    /// New matrix with column `j` multiplied by `scale[j]`.
    ///
    /// Zero scale factors would produce stored zeros, so they are rejected by
    /// a debug assertion; callers guard zero-norm columns themselves.
    pub fn scaled_columns(&self, scale: &[f64]) -> SparseMatrix {
        assert_eq!(scale.len(), self.n_cols);
        let mut values = self.values.clone();
        for j in 0..self.n_cols {
            let s = scale[j];
            debug_assert!(s != 0.0 && s.is_finite());
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                values[k] *= s;
            }
        }
        SparseMatrix {
            values,
            ..self.clone()
        }
    }

    /// Check the canonical-form invariants; used by tests.
    pub fn is_canonical(&self) -> bool {
        if self.col_ptr.len() != self.n_cols + 1 || self.col_ptr[0] != 0 {
            return false;
        }
        if *self.col_ptr.last().unwrap() != self.values.len() {
            return false;
        }
        if self.col_ptr.windows(2).any(|w| w[0] > w[1]) {
            return false;
        }
        for j in 0..self.n_cols {
            let (rows, vals) = self.col(j);
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            if rows.iter().any(|&i| i >= self.n_rows) {
                return false;
            }
            if vals.iter().any(|&v| v == 0.0) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_case() {
        let m = build_sparse(&[(0, 0, 1.0), (1, 1, 2.0)], 2, 2).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!(m.is_canonical());
    }

    #[test]
    fn cancellation_drops_entry() {
        let m = build_sparse(&[(0, 0, 1.0), (0, 0, -1.0)], 1, 1).unwrap();
        assert_eq!(m.nnz(), 0);
        assert!(m.is_canonical());
    }

    #[test]
    fn row_out_of_range_reports_triple() {
        let err = build_sparse(&[(2, 0, 5.0)], 2, 1).unwrap_err();
        match err {
            XrayError::TripleOutOfRange { row, col, value, .. } => {
                assert_eq!((row, col, value), (2, 0, 5.0));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicates_summed() {
        let m = build_sparse(&[(0, 0, 1.5), (0, 0, 2.5), (1, 0, 1.0)], 2, 1).unwrap();
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn dense_columns_roundtrip() {
        let m = SparseMatrix::from_dense_columns(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.col_to_dense(1), vec![0.0, 1.0]);
    }

    #[test]
    fn cols_to_dense_preserves_order() {
        let m = SparseMatrix::from_dense_columns(
            2,
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.4]],
        );
        let d = m.cols_to_dense(&[2, 0]);
        assert_eq!(d.col_to_vec(0), vec![0.6, 0.4]);
        assert_eq!(d.col_to_vec(1), vec![1.0, 0.0]);
    }

    proptest! {
        // build_sparse composed with to_triples is the identity on canonical
        // matrices, and always yields a canonical layout.
        #[test]
        fn build_roundtrip(
            triples in proptest::collection::vec(
                (0usize..7, 0usize..5, -4.0f64..4.0), 0..40),
        ) {
            let m = build_sparse(&triples, 7, 5).unwrap();
            prop_assert!(m.is_canonical());
            let again = build_sparse(&m.to_triples(), 7, 5).unwrap();
            prop_assert_eq!(m, again);
        }
    }
}
