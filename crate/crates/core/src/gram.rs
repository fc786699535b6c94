//! One-time Gram products: C = XᵀX, column norms, and the squared
//! Frobenius norm of X.
//!
//! Every entry of C is an inner product of two fixed columns accumulated in
//! fixed row order, so the result is bitwise identical for any thread count,
//! and C[i][j] equals C[j][i] bit for bit (IEEE multiplication commutes and
//! both sides see the same addends in the same order).

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::sparse::SparseMatrix;

/// Density at or above which C is stored dense instead of CSC.
pub const DEFAULT_DENSE_THRESHOLD: f64 = 0.25;

/// Storage for the symmetric n-by-n Gram matrix.
#[derive(Debug, Clone)]
pub enum GramStorage {
    Sparse(SparseMatrix),
    Dense(DenseMatrix),
}

/// C = XᵀX plus the column statistics every downstream stage keeps reusing.
#[derive(Debug, Clone)]
pub struct GramCache {
    storage: GramStorage,
    col_l1: Vec<f64>,
    col_l2sq: Vec<f64>,
    frob_sq: f64,
}

/// Row-major (CSR-like) copy of a CSC matrix; scratch for the Gram product.
struct RowMajor {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

fn to_row_major(x: &SparseMatrix) -> RowMajor {
    let mut row_ptr = vec![0usize; x.n_rows() + 1];
    for j in 0..x.n_cols() {
        let (rows, _) = x.col(j);
        for &i in rows {
            row_ptr[i + 1] += 1;
        }
    }
    for i in 0..x.n_rows() {
        row_ptr[i + 1] += row_ptr[i];
    }
    let mut next = row_ptr.clone();
    let mut col_idx = vec![0usize; x.nnz()];
    let mut values = vec![0.0f64; x.nnz()];
    // Scanning columns in ascending order leaves each row sorted by column.
    for j in 0..x.n_cols() {
        let (rows, vals) = x.col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            let slot = next[i];
            col_idx[slot] = j;
            values[slot] = v;
            next[i] += 1;
        }
    }
    RowMajor {
        row_ptr,
        col_idx,
        values,
    }
}

/// Sparse accumulator reused across the columns a worker processes.
struct Scratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            acc: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }
}

/// One output column of C: for every row t with X[t][j] != 0, add
/// X[t][j] times row t of X. Rows are visited in ascending order and each
/// row's entries are sorted, so the accumulation order is fixed.
fn gram_column(
    x: &SparseMatrix,
    rm: &RowMajor,
    j: usize,
    scratch: &mut Scratch,
) -> (Vec<usize>, Vec<f64>) {
    let (rows, vals) = x.col(j);
    for (&t, &w) in rows.iter().zip(vals) {
        for k in rm.row_ptr[t]..rm.row_ptr[t + 1] {
            let c = rm.col_idx[k];
            if !scratch.seen[c] {
                scratch.seen[c] = true;
                scratch.touched.push(c);
            }
            scratch.acc[c] += w * rm.values[k];
        }
    }
    scratch.touched.sort_unstable();
    let mut idx = Vec::with_capacity(scratch.touched.len());
    let mut out = Vec::with_capacity(scratch.touched.len());
    for &c in &scratch.touched {
        let v = scratch.acc[c];
        if v != 0.0 {
            idx.push(c);
            out.push(v);
        }
        scratch.acc[c] = 0.0;
        scratch.seen[c] = false;
    }
    scratch.touched.clear();
    (idx, out)
}

/// Compute the Gram cache for `x`.
///
/// The representation is dense iff `nnz(C)/n²` is at least `dense_threshold`.
pub fn gram(x: &SparseMatrix, dense_threshold: f64) -> GramCache {
    let n = x.n_cols();
    let mut col_l1 = vec![0.0; n];
    let mut col_l2sq = vec![0.0; n];
    for j in 0..n {
        let (_, vals) = x.col(j);
        let mut s = 0.0;
        let mut q = 0.0;
        for &v in vals {
            s += v;
            q += v * v;
        }
        col_l1[j] = s;
        col_l2sq[j] = q;
    }
    let frob_sq = col_l2sq.iter().sum();

    let rm = to_row_major(x);
    let columns: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map_init(
            || Scratch::new(n),
            |scratch, j| gram_column(x, &rm, j, scratch),
        )
        .collect();

    let nnz: usize = columns.iter().map(|(idx, _)| idx.len()).sum();
    let density = if n == 0 {
        0.0
    } else {
        nnz as f64 / (n as f64 * n as f64)
    };

    let storage = if n > 0 && density >= dense_threshold {
        let mut dense = DenseMatrix::zeros(n, n);
        for (j, (idx, vals)) in columns.iter().enumerate() {
            for (&i, &v) in idx.iter().zip(vals) {
                dense.set(i, j, v);
            }
        }
        GramStorage::Dense(dense)
    } else {
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (j, (idx, vals)) in columns.into_iter().enumerate() {
            row_idx.extend_from_slice(&idx);
            values.extend_from_slice(&vals);
            col_ptr[j + 1] = row_idx.len();
        }
        GramStorage::Sparse(SparseMatrix::from_parts_unchecked(
            n, n, col_ptr, row_idx, values,
        ))
    };

    GramCache {
        storage,
        col_l1,
        col_l2sq,
        frob_sq,
    }
}

impl GramCache {
    /// Number of columns of X (C is n-by-n).
    pub fn n(&self) -> usize {
        self.col_l2sq.len()
    }

    /// Signed column sums pᵀx_j with p the all-ones vector.
    pub fn col_l1(&self) -> &[f64] {
        &self.col_l1
    }

    /// Squared column norms; equals diag(C).
    pub fn col_l2sq(&self) -> &[f64] {
        &self.col_l2sq
    }

    /// Squared Frobenius norm of X.
    pub fn frob_sq(&self) -> f64 {
        self.frob_sq
    }

    pub fn storage(&self) -> &GramStorage {
        &self.storage
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, GramStorage::Dense(_))
    }

    /// Stored nonzeros of C (n² when dense).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            GramStorage::Sparse(s) => s.nnz(),
            GramStorage::Dense(d) => d.n_rows() * d.n_cols(),
        }
    }

    /// Entry C[i][j].
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            GramStorage::Sparse(s) => s.get(i, j),
            GramStorage::Dense(d) => d.get(i, j),
        }
    }

    /// Column j of C as a dense vector (row j by symmetry).
    pub fn dense_col(&self, j: usize) -> Vec<f64> {
        match &self.storage {
            GramStorage::Sparse(s) => s.col_to_dense(j),
            GramStorage::Dense(d) => d.col_to_vec(j),
        }
    }

    /// Apply `f(i, C[i][j])` to every stored entry of column j.
    ///
    /// For sparse storage only the nonzeros are visited; detection scorers
    /// rely on this to skip work where the clamped value would be dropped
    /// anyway.
    #[inline]
    pub fn for_each_col_entry<F: FnMut(usize, f64)>(&self, j: usize, mut f: F) {
        match &self.storage {
            GramStorage::Sparse(s) => {
                let (rows, vals) = s.col(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    f(i, v);
                }
            }
            GramStorage::Dense(d) => {
                for i in 0..d.n_rows() {
                    f(i, d.get(i, j));
                }
            }
        }
    }

    /// Densified rows C[indices[k]][:] in the given order.
    pub fn rows(&self, indices: &[usize]) -> DenseMatrix {
        let n = self.n();
        let mut out = DenseMatrix::zeros(indices.len(), n);
        for (k, &i) in indices.iter().enumerate() {
            let row = self.dense_col(i); // symmetry: row i == column i
            out.row_mut(k).copy_from_slice(&row);
        }
        out
    }
}
