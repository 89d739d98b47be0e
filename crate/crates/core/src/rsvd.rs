//! Randomized SVD: Gaussian range sketch, optional power iterations, then an
//! SVD of the small projected matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SktError};

/// Sketch parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdOptions {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

/// Truncated factors `U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct Rsvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Rank-`target_rank` approximate SVD of `s`.
///
/// The sketch width `target_rank + oversample` is capped at `min(rows, cols)`,
/// in which case the range is captured exactly. Deterministic for a fixed seed.
pub fn rsvd(s: &DMatrix<f64>, target_rank: usize, opts: RsvdOptions) -> Result<Rsvd> {
    let (rows, cols) = s.shape();
    let full = rows.min(cols);
    if target_rank == 0 || target_rank > full {
        return Err(SktError::RankTooLarge {
            requested: target_rank,
            rows,
            cols,
        });
    }
    let width = (target_rank + opts.oversample).min(full);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(cols, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_columns(s * omega);
    for _ in 0..opts.power_iters {
        let z = orthonormal_columns(s.tr_mul(&q));
        q = orthonormal_columns(s * z);
    }

    let b = q.tr_mul(s);
    let svd = b.svd(true, true);
    let (u_small, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vt"));

    // nalgebra does not sort singular values.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(target_rank);

    let u_full = &q * u_small;
    let u = DMatrix::from_fn(rows, order.len(), |i, j| u_full[(i, order[j])]);
    let v_t = DMatrix::from_fn(order.len(), cols, |i, j| v_t[(order[i], j)]);
    let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    Ok(Rsvd {
        u,
        singular_values,
        v_t,
    })
}

/// Dense SVD with singular values sorted in decreasing order.
pub fn dense_svd(s: &DMatrix<f64>) -> Rsvd {
    let svd = s.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vt"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Rsvd {
        u: DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        singular_values: DVector::from_iterator(
            order.len(),
            order.iter().map(|&i| svd.singular_values[i]),
        ),
        v_t: DMatrix::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]),
    }
}
