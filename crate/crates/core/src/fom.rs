//! Full-order model: the semi-discrete linear–quadratic SKT system and its
//! time integration with Kahan's linearly implicit method.
//!
//! All six operator matrices share the sparsity pattern of the Laplacian
//! (`α A + β I` with the diagonal always stored), so right-hand side and
//! Jacobian are evaluated entry by entry in a single pass over that pattern.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banded::BandMatrix;
use crate::diagnostics::{DiagnosticsSeries, EntropyWeights};
use crate::error::{check_len, Result, SktError};
use crate::grid::{build_laplacian, SpatialGrid};
use crate::par;
use crate::params::SktParams;
use crate::snapshots::{SnapshotMatrix, Species};
use crate::sparse;

/// Densities of both species at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub t: f64,
}

impl StateVector {
    pub fn new(u1: DVector<f64>, u2: DVector<f64>, t: f64) -> Result<Self> {
        check_len(u1.len(), u2.len(), "species lengths")?;
        Ok(Self { u1, u2, t })
    }

    pub fn constant(n: usize, v1: f64, v2: f64) -> Self {
        Self {
            u1: DVector::from_element(n, v1),
            u2: DVector::from_element(n, v2),
            t: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    /// `(u1, u2)` stacked into one vector of length `2N`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.u1[i] } else { self.u2[i - n] })
    }

    pub fn from_stacked(v: &DVector<f64>, t: f64) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(SktError::InvalidSize(format!(
                "stacked state has odd length {}",
                v.len()
            )));
        }
        let n = v.len() / 2;
        Ok(Self {
            u1: v.rows(0, n).into_owned(),
            u2: v.rows(n, n).into_owned(),
            t,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(self.u2.iter()).all(|v| v.is_finite())
    }
}

/// Assembled linear and quadratic operators of the semi-discrete system.
///
/// `F1 = L1 u1 + Q11 (u1⊙u1) + Q12 (u1⊙u2)`,
/// `F2 = L2 u2 + Q22 (u2⊙u2) + Q21 (u1⊙u2)`.
#[derive(Debug, Clone)]
pub struct FomOperators {
    laplacian: CsrMatrix<f64>,
    l1: CsrMatrix<f64>,
    l2: CsrMatrix<f64>,
    q11: CsrMatrix<f64>,
    q12: CsrMatrix<f64>,
    q21: CsrMatrix<f64>,
    q22: CsrMatrix<f64>,
    grid: SpatialGrid,
    params: SktParams,
    /// Largest `|row - col|` in the shared pattern.
    node_bandwidth: usize,
}

/// Build `L_i = c_i A + Γ r_i I` and `Q_ij = (a_i or b_i) A - Γ γ_ij I`.
pub fn assemble_fom(grid: &SpatialGrid, params: &SktParams) -> Result<FomOperators> {
    params.validate()?;
    let a = build_laplacian(grid)?.matrix;
    let g = params.reaction;
    let node_bandwidth = a
        .triplet_iter()
        .map(|(i, j, _)| i.abs_diff(j))
        .max()
        .unwrap_or(0);
    Ok(FomOperators {
        l1: sparse::shifted(&a, params.c1, g * params.r1),
        l2: sparse::shifted(&a, params.c2, g * params.r2),
        q11: sparse::shifted(&a, params.a1, -g * params.gamma11),
        q12: sparse::shifted(&a, params.b1, -g * params.gamma12),
        q21: sparse::shifted(&a, params.b2, -g * params.gamma21),
        q22: sparse::shifted(&a, params.a2, -g * params.gamma22),
        laplacian: a,
        grid: grid.clone(),
        params: *params,
        node_bandwidth,
    })
}

impl FomOperators {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn params(&self) -> &SktParams {
        &self.params
    }

    pub fn laplacian(&self) -> &CsrMatrix<f64> {
        &self.laplacian
    }

    pub fn l1(&self) -> &CsrMatrix<f64> {
        &self.l1
    }

    pub fn l2(&self) -> &CsrMatrix<f64> {
        &self.l2
    }

    pub fn q11(&self) -> &CsrMatrix<f64> {
        &self.q11
    }

    pub fn q12(&self) -> &CsrMatrix<f64> {
        &self.q12
    }

    pub fn q21(&self) -> &CsrMatrix<f64> {
        &self.q21
    }

    pub fn q22(&self) -> &CsrMatrix<f64> {
        &self.q22
    }

    /// Quadratic operator `Q_ij` by species indices in `{1, 2}`.
    pub fn q(&self, i: usize, j: usize) -> &CsrMatrix<f64> {
        match (i, j) {
            (1, 1) => &self.q11,
            (1, 2) => &self.q12,
            (2, 1) => &self.q21,
            (2, 2) => &self.q22,
            _ => panic!("species indices must be 1 or 2, got ({i}, {j})"),
        }
    }

    /// Linear operator `L_i`.
    pub fn l(&self, i: usize) -> &CsrMatrix<f64> {
        match i {
            1 => &self.l1,
            2 => &self.l2,
            _ => panic!("species index must be 1 or 2, got {i}"),
        }
    }

    /// Node count `N`.
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    fn check_state(&self, u: &StateVector) -> Result<()> {
        check_len(self.n(), u.u1.len(), "u1 length")?;
        check_len(self.n(), u.u2.len(), "u2 length")
    }

    /// Write `F1` and `F2` into the two halves of `out` (length `2N`).
    fn rhs_into(&self, u1: &[f64], u2: &[f64], f1: &mut [f64], f2: &mut [f64]) {
        let (offsets, cols, _) = self.laplacian.csr_data();
        let (l1, l2) = (self.l1.values(), self.l2.values());
        let (q11, q12) = (self.q11.values(), self.q12.values());
        let (q21, q22) = (self.q21.values(), self.q22.values());
        let row1 = |r: usize| {
            let mut acc = 0.0;
            for p in offsets[r]..offsets[r + 1] {
                let c = cols[p];
                let (a, b) = (u1[c], u2[c]);
                acc += l1[p] * a + q11[p] * a * a + q12[p] * a * b;
            }
            acc
        };
        let row2 = |r: usize| {
            let mut acc = 0.0;
            for p in offsets[r]..offsets[r + 1] {
                let c = cols[p];
                let (a, b) = (u1[c], u2[c]);
                acc += l2[p] * b + q22[p] * b * b + q21[p] * a * b;
            }
            acc
        };
        par::join(|| par::fill_indexed(f1, row1), || par::fill_indexed(f2, row2));
    }

    /// `F(u)` stacked as `(F1, F2)`.
    pub fn eval_rhs(&self, u: &StateVector) -> Result<DVector<f64>> {
        self.check_state(u)?;
        let n = self.n();
        let mut out = DVector::zeros(2 * n);
        let (f1, f2) = out.as_mut_slice().split_at_mut(n);
        self.rhs_into(u.u1.as_slice(), u.u2.as_slice(), f1, f2);
        Ok(out)
    }

    /// Visit every Jacobian entry as `(row, col, J11, J12, J21, J22)` node blocks.
    fn for_each_jacobian_block<F>(&self, u1: &[f64], u2: &[f64], mut visit: F)
    where
        F: FnMut(usize, usize, [f64; 4]),
    {
        let (offsets, cols, _) = self.laplacian.csr_data();
        let (l1, l2) = (self.l1.values(), self.l2.values());
        let (q11, q12) = (self.q11.values(), self.q12.values());
        let (q21, q22) = (self.q21.values(), self.q22.values());
        for r in 0..self.n() {
            for p in offsets[r]..offsets[r + 1] {
                let c = cols[p];
                let (a, b) = (u1[c], u2[c]);
                visit(
                    r,
                    c,
                    [
                        l1[p] + 2.0 * q11[p] * a + q12[p] * b,
                        q12[p] * a,
                        q21[p] * b,
                        l2[p] + 2.0 * q22[p] * b + q21[p] * a,
                    ],
                );
            }
        }
    }

    /// Block Jacobian `∂F/∂u` as a sparse `2N × 2N` matrix in `(u1, u2)` order.
    pub fn eval_jacobian(&self, u: &StateVector) -> Result<CsrMatrix<f64>> {
        self.check_state(u)?;
        let n = self.n();
        let mut coo = CooMatrix::new(2 * n, 2 * n);
        self.for_each_jacobian_block(u.u1.as_slice(), u.u2.as_slice(), |r, c, j| {
            coo.push(r, c, j[0]);
            coo.push(r, n + c, j[1]);
            coo.push(n + r, c, j[2]);
            coo.push(n + r, n + c, j[3]);
        });
        Ok(CsrMatrix::from(&coo))
    }

    /// One Kahan step with a throwaway workspace.
    pub fn kahan_step(&self, u: &StateVector, dt: f64) -> Result<StateVector> {
        let mut ws = KahanWorkspace::new(self);
        let mut next = u.clone();
        ws.step(self, &mut next, dt)?;
        Ok(next)
    }
}

/// Reusable buffers for [`KahanWorkspace::step`].
///
/// The linear system `(I - Δt/2 J(u^n)) δ = Δt F(u^n)` is assembled with the
/// two species interleaved per node, which keeps it banded with half-bandwidth
/// `2 b + 1` where `b` is the node bandwidth of the Laplacian.
#[derive(Debug, Clone)]
pub struct KahanWorkspace {
    band: BandMatrix,
    f1: Vec<f64>,
    f2: Vec<f64>,
    rhs: Vec<f64>,
}

impl KahanWorkspace {
    fn half_band(&self, ops: &FomOperators) -> usize {
        2 * ops.node_bandwidth + 1
    }

    pub fn new(ops: &FomOperators) -> Self {
        let n = ops.n();
        let half = 2 * ops.node_bandwidth + 1;
        Self {
            band: BandMatrix::zeros(2 * n, half, half),
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            rhs: vec![0.0; 2 * n],
        }
    }

    /// Advance `u` by one step of size `dt` in place.
    pub fn step(&mut self, ops: &FomOperators, u: &mut StateVector, dt: f64) -> Result<()> {
        ops.check_state(u)?;
        if !(dt > 0.0) {
            return Err(SktError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let n = ops.n();
        let (u1, u2) = (u.u1.as_slice(), u.u2.as_slice());
        ops.rhs_into(u1, u2, &mut self.f1, &mut self.f2);
        for r in 0..n {
            self.rhs[2 * r] = dt * self.f1[r];
            self.rhs[2 * r + 1] = dt * self.f2[r];
        }

        let mut band = std::mem::replace(&mut self.band, BandMatrix::zeros(0, 0, 0));
        band.clear();
        let h = -0.5 * dt;
        ops.for_each_jacobian_block(u1, u2, |r, c, j| {
            band.add(2 * r, 2 * c, h * j[0]);
            band.add(2 * r, 2 * c + 1, h * j[1]);
            band.add(2 * r + 1, 2 * c, h * j[2]);
            band.add(2 * r + 1, 2 * c + 1, h * j[3]);
        });
        for i in 0..2 * n {
            band.add(i, i, 1.0);
        }
        let lu = match band.factor() {
            Ok(lu) => lu,
            Err(e) => {
                self.band = BandMatrix::zeros(2 * n, self.half_band(ops), self.half_band(ops));
                return Err(e);
            }
        };
        lu.solve_in_place(&mut self.rhs);
        self.band = lu.into_band();

        for r in 0..n {
            u.u1[r] += self.rhs[2 * r];
            u.u2[r] += self.rhs[2 * r + 1];
        }
        u.t += dt;
        if !u.is_finite() {
            return Err(SktError::Divergence { t: u.t });
        }
        Ok(())
    }
}

/// Step size and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_end: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SktError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= dt && t_end.is_finite()) {
            return Err(SktError::InvalidParameter(format!(
                "t_end must be at least dt, got {t_end}"
            )));
        }
        Ok(Self { dt, t_end })
    }

    /// Number of steps to reach `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Time after `n` steps.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Stop once `‖u_i^n - u_i^{n-1}‖ / ‖u_i^n‖ <= tol` for both species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateRule {
    pub tol: f64,
}

impl Default for SteadyStateRule {
    fn default() -> Self {
        Self { tol: 1e-6 }
    }
}

/// How a full-order run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum FomOutcome {
    SteadyState { t: f64, step: usize },
    HorizonReached,
    Failed { t: f64, reason: String },
}

/// Snapshots, diagnostics and final state of a full-order run.
#[derive(Debug, Clone)]
pub struct FomRun {
    pub s1: SnapshotMatrix,
    pub s2: SnapshotMatrix,
    /// One sample per time step, including the initial state.
    pub diagnostics: DiagnosticsSeries,
    pub final_state: StateVector,
    pub outcome: FomOutcome,
}

impl FomRun {
    /// False when the run aborted; the stored data is then partial.
    pub fn is_valid(&self) -> bool {
        !matches!(self.outcome, FomOutcome::Failed { .. })
    }

    pub fn steady_time(&self) -> Option<f64> {
        match self.outcome {
            FomOutcome::SteadyState { t, .. } => Some(t),
            _ => None,
        }
    }
}

/// Integrate from `u0` with Kahan steps until steady state or `t_end`.
///
/// Snapshots are stored every `store_every` steps, always including the
/// initial and final states.
pub fn integrate_fom(
    ops: &FomOperators,
    u0: &StateVector,
    time: TimeGrid,
    stop: Option<SteadyStateRule>,
    store_every: usize,
) -> Result<FomRun> {
    ops.check_state(u0)?;
    if store_every == 0 {
        return Err(SktError::InvalidParameter("store_every must be >= 1".into()));
    }
    if let Some(rule) = stop {
        if !(rule.tol > 0.0) {
            return Err(SktError::InvalidParameter(format!(
                "steady-state tolerance must be positive, got {}",
                rule.tol
            )));
        }
    }
    let grid = ops.grid();
    let n = ops.n();
    let weights = EntropyWeights::from_params(ops.params()).unwrap_or_else(|e| {
        log::warn!("{e}; using unit entropy weights");
        EntropyWeights { pi1: 1.0, pi2: 1.0 }
    });

    let mut u = u0.clone();
    u.t = 0.0;
    let mut cols1 = u.u1.as_slice().to_vec();
    let mut cols2 = u.u2.as_slice().to_vec();
    let mut times = vec![0.0];
    let mut diagnostics = DiagnosticsSeries::default();
    diagnostics.record(0.0, u.u1.as_slice(), u.u2.as_slice(), None, weights, grid);

    let mut ws = KahanWorkspace::new(ops);
    let mut prev = u.clone();
    let mut outcome = FomOutcome::HorizonReached;
    let total = time.steps();
    let mut last_stored = 0;
    for step in 1..=total {
        prev.u1.copy_from(&u.u1);
        prev.u2.copy_from(&u.u2);
        if let Err(e) = ws.step(ops, &mut u, time.dt) {
            let t = time.time(step);
            log::error!("full-order integration failed at t={t}: {e}");
            outcome = FomOutcome::Failed {
                t,
                reason: e.to_string(),
            };
            break;
        }
        u.t = time.time(step);
        diagnostics.record(
            u.t,
            u.u1.as_slice(),
            u.u2.as_slice(),
            Some((prev.u1.as_slice(), prev.u2.as_slice())),
            weights,
            grid,
        );
        let converged = stop.is_some_and(|rule| {
            let last = diagnostics.len() - 1;
            diagnostics.relchg_u1[last] <= rule.tol && diagnostics.relchg_u2[last] <= rule.tol
        });
        if step % store_every == 0 || converged || step == total {
            cols1.extend_from_slice(u.u1.as_slice());
            cols2.extend_from_slice(u.u2.as_slice());
            times.push(u.t);
            last_stored = step;
        }
        if converged {
            outcome = FomOutcome::SteadyState { t: u.t, step };
            break;
        }
    }
    if matches!(outcome, FomOutcome::Failed { .. }) && last_stored == 0 && times.len() == 1 {
        log::warn!("no steps completed; only the initial state is stored");
    }
    let final_state = if matches!(outcome, FomOutcome::Failed { .. }) {
        prev
    } else {
        u
    };
    Ok(FomRun {
        s1: SnapshotMatrix::from_columns(n, cols1, times.clone(), Species::U1)?,
        s2: SnapshotMatrix::from_columns(n, cols2, times, Species::U2)?,
        diagnostics,
        final_state,
        outcome,
    })
}

/// Equilibrium with multiplicative uniform noise: `u_i* (1 + amplitude η)`,
/// `η ~ U[-1, 1]` drawn from a generator seeded with `seed`.
pub fn random_perturbed_initial(
    grid: &SpatialGrid,
    params: &SktParams,
    amplitude: f64,
    seed: u64,
) -> Result<StateVector> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(SktError::InvalidParameter(format!(
            "perturbation amplitude must be non-negative, got {amplitude}"
        )));
    }
    let (e1, e2) = params.equilibrium()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let mut draw = |base: f64| {
        DVector::from_iterator(
            n,
            (0..n).map(|_| {
                let eta: f64 = rng.random_range(-1.0..=1.0);
                base * (1.0 + amplitude * eta)
            }),
        )
    };
    let u1 = draw(e1);
    let u2 = draw(e2);
    StateVector::new(u1, u2, 0.0)
}
