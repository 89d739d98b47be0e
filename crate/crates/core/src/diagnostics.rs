//! Entropy, densities, norms and error metrics shared by all experiments.

use std::io::Write;

use crate::error::{check_len, Result, SktError};
use crate::grid::SpatialGrid;
use crate::params::SktParams;
use crate::snapshots::SnapshotMatrix;

/// Floor applied to densities before taking logarithms in [`entropy_clamped`].
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Weights `(π1, π2)` with `π1 b1 = π2 b2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyWeights {
    pub pi1: f64,
    pub pi2: f64,
}

impl EntropyWeights {
    pub fn new(pi1: f64, pi2: f64) -> Result<Self> {
        if !(pi1 > 0.0 && pi2 > 0.0 && pi1.is_finite() && pi2.is_finite()) {
            return Err(SktError::InvalidParameter(format!(
                "entropy weights must be positive, got ({pi1}, {pi2})"
            )));
        }
        Ok(Self { pi1, pi2 })
    }

    /// `(π1, π2) = (b2, b1)`; `(1, 1)` when there is no cross-diffusion.
    pub fn from_params(p: &SktParams) -> Result<Self> {
        if p.b1 == 0.0 && p.b2 == 0.0 {
            return Self::new(1.0, 1.0);
        }
        Self::new(p.b2, p.b1)
    }
}

fn entropy_density(pi: f64, u: f64) -> f64 {
    pi * u * (u.ln() - 1.0)
}

/// Entropy `∫ π1 u1 (log u1 - 1) + π2 u2 (log u2 - 1)` with densities floored
/// at [`DENSITY_FLOOR`]. Returns the value and the number of floored nodes.
pub fn entropy_clamped(
    u1: &[f64],
    u2: &[f64],
    weights: EntropyWeights,
    grid: &SpatialGrid,
) -> (f64, usize) {
    let mut clamped = 0;
    let mut total = 0.0;
    for ((w, &a), &b) in grid.quadrature_weights().iter().zip(u1).zip(u2) {
        let a = if a < DENSITY_FLOOR {
            clamped += 1;
            DENSITY_FLOOR
        } else {
            a
        };
        let b = if b < DENSITY_FLOOR {
            clamped += 1;
            DENSITY_FLOOR
        } else {
            b
        };
        total += w * (entropy_density(weights.pi1, a) + entropy_density(weights.pi2, b));
    }
    (total, clamped)
}

/// Entropy of a strictly positive state.
pub fn entropy(
    u1: &[f64],
    u2: &[f64],
    weights: EntropyWeights,
    grid: &SpatialGrid,
) -> Result<f64> {
    check_len(grid.len(), u1.len(), "entropy u1")?;
    check_len(grid.len(), u2.len(), "entropy u2")?;
    for (species, u) in [(1, u1), (2, u2)] {
        if let Some((node, &value)) = u.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(SktError::NonPositiveDensity {
                species,
                node,
                value,
            });
        }
    }
    Ok(entropy_clamped(u1, u2, weights, grid).0)
}

/// Outcome of [`check_entropy_decay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayVerdict {
    pub decreasing: bool,
    /// Largest `E(t_{n+1}) - E(t_n)` above the slack, zero if none.
    pub max_violation: f64,
    /// Index `n + 1` of the worst up-tick.
    pub worst_index: Option<usize>,
}

/// Default slack: `1e-10 |E(t_0)|`.
pub fn default_decay_slack(series: &[f64]) -> f64 {
    series.first().map_or(0.0, |e| 1e-10 * e.abs())
}

/// Check that an entropy series is non-increasing up to `slack`.
pub fn check_entropy_decay(series: &[f64], slack: f64) -> DecayVerdict {
    let mut verdict = DecayVerdict {
        decreasing: true,
        max_violation: 0.0,
        worst_index: None,
    };
    for (n, w) in series.windows(2).enumerate() {
        let rise = w[1] - w[0];
        if rise > slack || rise.is_nan() {
            verdict.decreasing = false;
            if rise.is_nan() || rise > verdict.max_violation {
                verdict.max_violation = rise;
                verdict.worst_index = Some(n + 1);
            }
        }
    }
    verdict
}

/// Time-averaged relative L² error between two trajectories on the same
/// sample times: `(1/N_t) Σ ‖u^n - v^n‖ / ‖u^n‖`.
pub fn relative_l2_error(
    reference: &SnapshotMatrix,
    approx: &SnapshotMatrix,
    grid: &SpatialGrid,
) -> Result<f64> {
    check_len(reference.n_states(), approx.n_states(), "state dimension")?;
    check_len(reference.len(), approx.len(), "time samples")?;
    check_len(grid.len(), reference.n_states(), "grid size")?;
    if reference.is_empty() {
        return Err(SktError::InvalidSize("empty trajectory".into()));
    }
    for (a, b) in reference.times().iter().zip(approx.times()) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(SktError::InvalidSize(format!(
                "time axes differ ({a} vs {b})"
            )));
        }
    }
    let mut sum = 0.0;
    for n in 0..reference.len() {
        let u = reference.column(n);
        let norm = grid.l2_norm(u);
        if norm == 0.0 {
            return Err(SktError::ZeroNorm(n));
        }
        sum += grid.l2_distance(u, approx.column(n)) / norm;
    }
    Ok(sum / reference.len() as f64)
}

/// Relative L² error of a single state.
pub fn relative_l2_error_at(reference: &[f64], approx: &[f64], grid: &SpatialGrid) -> Result<f64> {
    let norm = grid.l2_norm(reference);
    if norm == 0.0 {
        return Err(SktError::ZeroNorm(0));
    }
    Ok(grid.l2_distance(reference, approx) / norm)
}

/// Per-sample diagnostics of a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub density_u1: Vec<f64>,
    pub density_u2: Vec<f64>,
    pub norm_u1: Vec<f64>,
    pub norm_u2: Vec<f64>,
    /// Relative change `‖u_i^n - u_i^{n-1}‖ / ‖u_i^n‖`; NaN for the first sample.
    pub relchg_u1: Vec<f64>,
    pub relchg_u2: Vec<f64>,
    /// Total number of density values floored during entropy evaluation.
    pub clamped_nodes: usize,
}

impl DiagnosticsSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append one sample. `previous` is the state at the prior sample.
    pub fn record(
        &mut self,
        t: f64,
        u1: &[f64],
        u2: &[f64],
        previous: Option<(&[f64], &[f64])>,
        weights: EntropyWeights,
        grid: &SpatialGrid,
    ) {
        let n1 = grid.l2_norm(u1);
        let n2 = grid.l2_norm(u2);
        let (e, clamped) = entropy_clamped(u1, u2, weights, grid);
        if clamped > 0 {
            log::debug!("entropy at t={t}: floored {clamped} non-positive densities");
        }
        self.clamped_nodes += clamped;
        let (c1, c2) = match previous {
            Some((p1, p2)) => (grid.l2_distance(u1, p1) / n1, grid.l2_distance(u2, p2) / n2),
            None => (f64::NAN, f64::NAN),
        };
        self.times.push(t);
        self.entropy.push(e);
        self.density_u1.push(crate::pid::average_density(u1, grid));
        self.density_u2.push(crate::pid::average_density(u2, grid));
        self.norm_u1.push(n1);
        self.norm_u2.push(n2);
        self.relchg_u1.push(c1);
        self.relchg_u2.push(c2);
    }

    /// Build the series for every column of a trajectory pair.
    pub fn from_trajectory(
        s1: &SnapshotMatrix,
        s2: &SnapshotMatrix,
        weights: EntropyWeights,
        grid: &SpatialGrid,
    ) -> Self {
        let mut series = Self::default();
        for n in 0..s1.len() {
            let prev = (n > 0).then(|| (s1.column(n - 1), s2.column(n - 1)));
            series.record(s1.times()[n], s1.column(n), s2.column(n), prev, weights, grid);
        }
        series
    }

    /// CSV with columns `t, entropy, dens_u1, dens_u2, relchg_u1, relchg_u2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "entropy", "dens_u1", "dens_u2", "relchg_u1", "relchg_u2"])?;
        for n in 0..self.len() {
            w.write_record(
                [
                    self.times[n],
                    self.entropy[n],
                    self.density_u1[n],
                    self.density_u2[n],
                    self.relchg_u1[n],
                    self.relchg_u2[n],
                ]
                .iter()
                .map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
