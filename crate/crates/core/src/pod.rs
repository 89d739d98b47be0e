//! POD bases per species, with the mode count chosen by relative information
//! content.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result, SktError};
use crate::rsvd::{dense_svd, rsvd, RsvdOptions};
use crate::snapshots::SnapshotMatrix;

/// Initial sketch rank before adaptive enlargement.
pub const INITIAL_SKETCH_RANK: usize = 16;

/// Orthonormal reduction basis for one species.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `N × k`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// Leading singular values that were computed, non-increasing.
    pub singular_values: Vec<f64>,
    /// `‖S‖_F² = Σ σ_n²` over the full spectrum.
    pub total_energy: f64,
    pub ric_tol: f64,
}

impl PodBasis {
    /// Wrap an orthonormal matrix (e.g. a reloaded or hand-built basis).
    pub fn from_matrix(v: DMatrix<f64>) -> Self {
        Self {
            v,
            singular_values: Vec::new(),
            total_energy: f64::NAN,
            ric_tol: f64::NAN,
        }
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// `Vᵀ u`.
    pub fn project(&self, u: &[f64]) -> Result<DVector<f64>> {
        check_len(self.n(), u.len(), "projection")?;
        Ok(self.v.tr_mul(&DVector::from_column_slice(u)))
    }

    /// `V û`.
    pub fn lift(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.k(), coeffs.len(), "lift")?;
        Ok(&self.v * coeffs)
    }

    /// Retained energy deficit `1 - Σ_{n≤k} σ_n² / ‖S‖_F²`.
    pub fn energy_deficit(&self) -> f64 {
        let kept: f64 = self.singular_values.iter().take(self.k()).map(|s| s * s).sum();
        1.0 - kept / self.total_energy
    }
}

fn check_tol(ric_tol: f64) -> Result<()> {
    if !(ric_tol > 0.0 && ric_tol < 1.0) {
        return Err(SktError::InvalidParameter(format!(
            "RIC tolerance must lie in (0, 1), got {ric_tol}"
        )));
    }
    Ok(())
}

/// Smallest `k` whose energy deficit relative to `total_energy` is below
/// `ric_tol`, or `None` if the given leading values do not reach it.
pub fn select_modes_with_total(singular_values: &[f64], total_energy: f64, ric_tol: f64) -> Option<usize> {
    let mut kept = 0.0;
    for (k, s) in singular_values.iter().enumerate() {
        kept += s * s;
        if 1.0 - kept / total_energy < ric_tol {
            return Some(k + 1);
        }
    }
    None
}

/// Mode count for a complete spectrum.
///
/// An all-zero spectrum yields `k = 1` with a warning.
pub fn select_modes(singular_values: &[f64], ric_tol: f64) -> Result<usize> {
    check_tol(ric_tol)?;
    if singular_values.is_empty() {
        return Err(SktError::InvalidSize("empty singular value spectrum".into()));
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        log::warn!("all singular values vanish; keeping a single mode");
        return Ok(1);
    }
    Ok(select_modes_with_total(singular_values, total, ric_tol).unwrap_or(singular_values.len()))
}

/// POD basis from a randomized SVD whose sketch is doubled until the retained
/// energy reaches the tolerance. The deficit is measured against the exact
/// `‖S‖_F²`, so the tail beyond the sketch is accounted for.
pub fn build_basis(s: &SnapshotMatrix, ric_tol: f64, opts: RsvdOptions) -> Result<PodBasis> {
    check_tol(ric_tol)?;
    if s.is_empty() {
        return Err(SktError::InvalidSize("empty snapshot matrix".into()));
    }
    let data = s.data();
    let full = data.nrows().min(data.ncols());
    let total = data.norm_squared();
    if total == 0.0 {
        log::warn!("snapshot matrix is zero; returning a single unit mode");
        let mut v = DMatrix::zeros(data.nrows(), 1);
        v[(0, 0)] = 1.0;
        return Ok(PodBasis {
            v,
            singular_values: vec![0.0],
            total_energy: 0.0,
            ric_tol,
        });
    }
    let mut rank = INITIAL_SKETCH_RANK.min(full);
    loop {
        let f = rsvd(data, rank, opts)?;
        let sv: Vec<f64> = f.singular_values.iter().copied().collect();
        let k = match select_modes_with_total(&sv, total, ric_tol) {
            Some(k) => Some(k),
            None if rank == full => Some(full),
            None => None,
        };
        if let Some(k) = k {
            return Ok(PodBasis {
                v: f.u.columns(0, k).into_owned(),
                singular_values: sv,
                total_energy: total,
                ric_tol,
            });
        }
        rank = (2 * rank).min(full);
        log::debug!("enlarging POD sketch to rank {rank}");
    }
}

/// POD basis from a dense SVD; intended for small problems and as a reference.
pub fn build_basis_dense(s: &SnapshotMatrix, ric_tol: f64) -> Result<PodBasis> {
    check_tol(ric_tol)?;
    if s.is_empty() {
        return Err(SktError::InvalidSize("empty snapshot matrix".into()));
    }
    let f = dense_svd(s.data());
    let sv: Vec<f64> = f.singular_values.iter().copied().collect();
    let k = select_modes(&sv, ric_tol)?;
    Ok(PodBasis {
        v: f.u.columns(0, k).into_owned(),
        singular_values: sv,
        total_energy: s.data().norm_squared(),
        ric_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::Species;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn snaps(data: DMatrix<f64>) -> SnapshotMatrix {
        let times = (0..data.ncols()).map(|j| j as f64).collect();
        SnapshotMatrix::new(data, times, Species::U1).unwrap()
    }

    fn low_rank_plus_noise(n: usize, nt: usize, rank: usize, noise: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<f64>::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
        let b = DMatrix::<f64>::from_fn(rank, nt, |_, _| StandardNormal.sample(&mut rng));
        let e = DMatrix::<f64>::from_fn(n, nt, |_, _| noise * rng.random_range(-1.0..1.0));
        a * b + e
    }

    #[test]
    fn select_modes_examples() {
        assert_eq!(select_modes(&[1.0, 0.0, 0.0], 1e-8).unwrap(), 1);
        // Deficit after one mode is 1e-6 / (1 + 1e-6) < 1e-4.
        assert_eq!(select_modes(&[1.0, 1e-3], 1e-4).unwrap(), 1);
        assert_eq!(select_modes(&[1.0, 1e-1], 1e-4).unwrap(), 2);
        assert_eq!(select_modes(&[0.0, 0.0], 1e-4).unwrap(), 1);
        assert!(select_modes(&[1.0], 0.0).is_err());
        assert!(select_modes(&[1.0], 1.0).is_err());
        assert!(select_modes(&[], 0.1).is_err());
    }

    #[test]
    fn identical_columns_give_one_mode() {
        let col = DVector::from_vec(vec![1.0, 2.0, -2.0, 4.0]);
        let data = DMatrix::from_fn(4, 6, |i, _| col[i]);
        let b = build_basis(&snaps(data), 1e-10, RsvdOptions::default()).unwrap();
        assert_eq!(b.k(), 1);
        let expected = col.normalize();
        let v = b.v.column(0);
        let sign = v.dot(&expected).signum();
        assert!((v * sign - expected).amax() < 1e-12);
    }

    #[test]
    fn flat_spectrum_keeps_every_column() {
        let mut data = DMatrix::zeros(8, 5);
        for j in 0..5 {
            data[(j, j)] = 2.0;
        }
        let b = build_basis(&snaps(data), 1e-6, RsvdOptions::default()).unwrap();
        assert_eq!(b.k(), 5);
    }

    #[test]
    fn reconstruction_error_matches_tail_energy() {
        let data = low_rank_plus_noise(50, 40, 5, 1e-3, 8);
        let s = snaps(data.clone());
        let dense = dense_svd(&data);
        let b = build_basis(&s, 1e-7, RsvdOptions::default()).unwrap();
        let k = b.k();
        let resid = (&data - &b.v * b.v.tr_mul(&data)).norm();
        let tail: f64 = dense.singular_values.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt();
        assert!((resid - tail).abs() <= 1e-8 * data.norm(), "{resid} vs {tail}");
    }

    #[test]
    fn sketch_grows_when_needed() {
        // 40 comparable singular values: the initial sketch of 16 is not enough.
        let data = low_rank_plus_noise(60, 50, 40, 0.0, 3);
        let b = build_basis(&snaps(data), 1e-10, RsvdOptions::default()).unwrap();
        assert_eq!(b.k(), 40);
        assert!(b.energy_deficit() < 1e-10);
    }

    #[test]
    fn dense_and_randomized_agree_on_mode_count() {
        let data = low_rank_plus_noise(40, 30, 6, 1e-4, 21);
        let s = snaps(data);
        for tol in [1e-2, 1e-4, 1e-6] {
            let a = build_basis(&s, tol, RsvdOptions::default()).unwrap();
            let b = build_basis_dense(&s, tol).unwrap();
            assert_eq!(a.k(), b.k(), "tol {tol}");
        }
    }

    #[test]
    fn pod_is_optimal_against_random_subspaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data = low_rank_plus_noise(25, 20, 4, 0.2, 4);
        let s = snaps(data.clone());
        let b = build_basis_dense(&s, 1e-2).unwrap();
        let k = b.k();
        let pod_err = (&data - &b.v * b.v.tr_mul(&data)).norm();
        for _ in 0..200 {
            let q = DMatrix::<f64>::from_fn(25, k, |_, _| StandardNormal.sample(&mut rng)).qr().q();
            let err = (&data - &q * q.tr_mul(&data)).norm();
            assert!(err >= pod_err - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bases_are_orthonormal(seed in any::<u64>(), rank in 1usize..8) {
            let data = low_rank_plus_noise(30, 25, rank, 1e-3, seed);
            let b = build_basis(&snaps(data), 1e-5, RsvdOptions { seed, ..Default::default() }).unwrap();
            let gram = b.v.tr_mul(&b.v);
            prop_assert!((gram - DMatrix::identity(b.k(), b.k())).amax() < 1e-12);
            prop_assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn mode_count_monotone_in_tolerance(seed in any::<u64>(), t1 in 1e-8f64..1e-1, t2 in 1e-8f64..1e-1) {
            let data = low_rank_plus_noise(30, 25, 10, 1e-2, seed);
            let s = snaps(data);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let k_lo = build_basis_dense(&s, lo).unwrap().k();
            let k_hi = build_basis_dense(&s, hi).unwrap().k();
            prop_assert!(k_lo >= k_hi);
        }
    }
}
