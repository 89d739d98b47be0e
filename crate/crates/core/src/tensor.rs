//! Matricized quadratic tensor restricted to a pair of bases.
//!
//! `Ĥ` is `N × (k_i k_j)` with column `m k_j + n` equal to
//! `V_i[:, m] ⊙ V_j[:, n]`, so that `Ĥ (a ⊗ b) = (V_i a) ⊙ (V_j b)`.
//! Row `r` of `Ĥ` is `V_i[r, :] ⊗ V_j[r, :]`.

use nalgebra::DMatrix;

use crate::error::{check_len, Result};
use crate::par;

/// Batched construction: every column is one Hadamard product of basis
/// columns, written in contiguous storage and split across threads.
pub fn build_reduced_tensor(vi: &DMatrix<f64>, vj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(vi.nrows(), vj.nrows(), "basis rows")?;
    let (n, ki, kj) = (vi.nrows(), vi.ncols(), vj.ncols());
    let mut out = DMatrix::zeros(n, ki * kj);
    if n == 0 || ki * kj == 0 {
        return Ok(out);
    }
    let (a, b) = (vi.as_slice(), vj.as_slice());
    par::for_each_chunk(out.as_mut_slice(), n, |col, dst| {
        let (m, l) = (col / kj, col % kj);
        let (ca, cb) = (&a[m * n..(m + 1) * n], &b[l * n..(l + 1) * n]);
        for ((d, x), y) in dst.iter_mut().zip(ca).zip(cb) {
            *d = x * y;
        }
    });
    Ok(out)
}

/// Same columns as [`build_reduced_tensor`], always single-threaded.
pub fn build_reduced_tensor_seq(vi: &DMatrix<f64>, vj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(vi.nrows(), vj.nrows(), "basis rows")?;
    let (ki, kj) = (vi.ncols(), vj.ncols());
    let mut out = DMatrix::zeros(vi.nrows(), ki * kj);
    for m in 0..ki {
        for l in 0..kj {
            out.column_mut(m * kj + l)
                .copy_from(&vi.column(m).component_mul(&vj.column(l)));
        }
    }
    Ok(out)
}

/// Reference construction: one Kronecker product of basis rows per grid node.
pub fn build_reduced_tensor_rowwise(vi: &DMatrix<f64>, vj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(vi.nrows(), vj.nrows(), "basis rows")?;
    let mut out = DMatrix::zeros(vi.nrows(), vi.ncols() * vj.ncols());
    for r in 0..vi.nrows() {
        let row = vi.row(r).kronecker(&vj.row(r));
        out.row_mut(r).copy_from(&row);
    }
    Ok(out)
}
