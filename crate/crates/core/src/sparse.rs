//! Small sparse-matrix helpers on top of `nalgebra_sparse::CsrMatrix`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{check_len, Result};
use crate::par;

/// Kronecker product of two CSR matrices.
pub fn kron(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for (ia, ja, &va) in a.triplet_iter() {
        for (ib, jb, &vb) in b.triplet_iter() {
            coo.push(ia * b.nrows() + ib, ja * b.ncols() + jb, va * vb);
        }
    }
    CsrMatrix::from(&coo)
}

/// `alpha * a + beta * b` for matrices of equal shape.
pub fn linear_combination(
    alpha: f64,
    a: &CsrMatrix<f64>,
    beta: f64,
    b: &CsrMatrix<f64>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        coo.push(i, j, alpha * v);
    }
    for (i, j, &v) in b.triplet_iter() {
        coo.push(i, j, beta * v);
    }
    CsrMatrix::from(&coo)
}

/// Position of the diagonal entry of every row in the CSR value array.
///
/// Panics if a row has no stored diagonal entry.
pub fn diagonal_positions(m: &CsrMatrix<f64>) -> Vec<usize> {
    let (offsets, cols, _) = m.csr_data();
    (0..m.nrows())
        .map(|r| {
            let start = offsets[r];
            let row = &cols[start..offsets[r + 1]];
            start + row.binary_search(&r).expect("missing diagonal entry")
        })
        .collect()
}

/// `alpha * m + beta * I`, reusing the sparsity pattern of `m`.
///
/// `m` must store every diagonal entry.
pub fn shifted(m: &CsrMatrix<f64>, alpha: f64, beta: f64) -> CsrMatrix<f64> {
    let diag = diagonal_positions(m);
    let mut values: Vec<f64> = m.values().iter().map(|v| alpha * v).collect();
    for p in diag {
        values[p] += beta;
    }
    CsrMatrix::try_from_pattern_and_values(m.pattern().clone(), values)
        .expect("pattern reuse preserves validity")
}

/// Sequential `y = m x`.
pub fn spmv_seq(m: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = m.csr_data();
    for (r, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for p in offsets[r]..offsets[r + 1] {
            acc += vals[p] * x[cols[p]];
        }
        *out = acc;
    }
}

/// `y = m x`, row-parallel when the `parallel` feature is on.
pub fn spmv_into(m: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = m.csr_data();
    par::fill_indexed(y, |r| {
        let mut acc = 0.0;
        for p in offsets[r]..offsets[r + 1] {
            acc += vals[p] * x[cols[p]];
        }
        acc
    });
}

/// Checked `m x`.
pub fn spmv(m: &CsrMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(m.ncols(), x.len(), "sparse matrix-vector product")?;
    let mut y = DVector::zeros(m.nrows());
    spmv_into(m, x.as_slice(), y.as_mut_slice());
    Ok(y)
}

/// Sparse times dense, one dense column at a time.
pub fn sparse_dense(m: &CsrMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let nrows = m.nrows();
    let mut out = DMatrix::zeros(nrows, d.ncols());
    if nrows == 0 {
        return out;
    }
    let input = d.as_slice();
    let (offsets, cols, vals) = m.csr_data();
    let inner = d.nrows();
    par::for_each_chunk(out.as_mut_slice(), nrows, |c, col| {
        let x = &input[c * inner..(c + 1) * inner];
        for (r, o) in col.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in offsets[r]..offsets[r + 1] {
                acc += vals[p] * x[cols[p]];
            }
            *o = acc;
        }
    });
    out
}

/// Dense copy, for tests and small diagnostics.
pub fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, &v) in m.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}
