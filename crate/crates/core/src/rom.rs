//! Galerkin reduced model with precomputed quadratic operators.
//!
//! With `W_ij = V_iᵀ Q_ij Ĥ(V_i, V_j)` the reduced right-hand side is
//!
//! ```text
//! F̂1 = L̂1 a + W11 (a ⊗ a) + W12 (a ⊗ b)
//! F̂2 = L̂2 b + W22 (b ⊗ b) + W21 (b ⊗ a)
//! ```
//!
//! for reduced coordinates `a = û1`, `b = û2`. Nothing of grid size is touched
//! after assembly.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{check_len, Result, SktError};
use crate::fom::{FomOperators, StateVector};
use crate::pod::PodBasis;
use crate::snapshots::{read_f64, read_u32, read_u64, SnapshotMatrix, Species};
use crate::sparse::sparse_dense;
use crate::tensor::build_reduced_tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"SKTR";
pub const MODEL_VERSION: u32 = 1;

/// Reduced coordinates of both species.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub u1_hat: DVector<f64>,
    pub u2_hat: DVector<f64>,
    pub t: f64,
}

impl ReducedState {
    pub fn zeros(k1: usize, k2: usize) -> Self {
        Self {
            u1_hat: DVector::zeros(k1),
            u2_hat: DVector::zeros(k2),
            t: 0.0,
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let (k1, k2) = (self.u1_hat.len(), self.u2_hat.len());
        DVector::from_fn(k1 + k2, |i, _| {
            if i < k1 {
                self.u1_hat[i]
            } else {
                self.u2_hat[i - k1]
            }
        })
    }

    pub fn is_finite(&self) -> bool {
        self.u1_hat.iter().chain(self.u2_hat.iter()).all(|v| v.is_finite())
    }
}

/// Projected linear operator, quadratic operators and the bases they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    /// `blockdiag(V1ᵀ L1 V1, V2ᵀ L2 V2)`.
    pub l_hat: DMatrix<f64>,
    /// `k1 × k1²`
    pub w11: DMatrix<f64>,
    /// `k1 × k1 k2`
    pub w12: DMatrix<f64>,
    /// `k2 × k2 k1`
    pub w21: DMatrix<f64>,
    /// `k2 × k2²`
    pub w22: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
}

fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    check_len(rows, m.nrows(), context)?;
    check_len(cols, m.ncols(), context)
}

/// `V_iᵀ Q Ĥ(V_i, V_j)`, computed as `(Qᵀ V_i)ᵀ Ĥ`.
fn project_quadratic(q: &CsrMatrix<f64>, vi: &DMatrix<f64>, vj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let h = build_reduced_tensor(vi, vj)?;
    let p = sparse_dense(&q.transpose(), vi);
    Ok(p.tr_mul(&h))
}

/// Galerkin projection of the full-order operators onto `V1`, `V2`.
pub fn assemble_rom(ops: &FomOperators, basis1: &PodBasis, basis2: &PodBasis) -> Result<ReducedModel> {
    assemble_rom_from_bases(ops, &basis1.v, &basis2.v)
}

pub fn assemble_rom_from_bases(ops: &FomOperators, v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> Result<ReducedModel> {
    check_len(ops.n(), v1.nrows(), "basis 1 rows")?;
    check_len(ops.n(), v2.nrows(), "basis 2 rows")?;
    let (k1, k2) = (v1.ncols(), v2.ncols());
    if k1 == 0 || k2 == 0 {
        return Err(SktError::InvalidSize("reduced model needs at least one mode per species".into()));
    }
    let mut l_hat = DMatrix::zeros(k1 + k2, k1 + k2);
    l_hat
        .view_mut((0, 0), (k1, k1))
        .copy_from(&v1.tr_mul(&sparse_dense(ops.l1(), v1)));
    l_hat
        .view_mut((k1, k1), (k2, k2))
        .copy_from(&v2.tr_mul(&sparse_dense(ops.l2(), v2)));
    Ok(ReducedModel {
        l_hat,
        w11: project_quadratic(ops.q11(), v1, v1)?,
        w12: project_quadratic(ops.q12(), v1, v2)?,
        w21: project_quadratic(ops.q21(), v2, v1)?,
        w22: project_quadratic(ops.q22(), v2, v2)?,
        v1: v1.clone(),
        v2: v2.clone(),
    })
}

/// Jacobian contribution of `W (x ⊗ y)` with respect to `x`: column `m` is
/// `Σ_n W[:, m ky + n] y_n`.
fn add_first_slot(w: &DMatrix<f64>, y: &DVector<f64>, out: &mut nalgebra::DMatrixViewMut<f64>) {
    let ky = y.len();
    for m in 0..out.ncols() {
        for n in 0..ky {
            let c = y[n];
            if c != 0.0 {
                out.column_mut(m).axpy(c, &w.column(m * ky + n), 1.0);
            }
        }
    }
}

/// Jacobian contribution of `W (x ⊗ y)` with respect to `y`: column `n` is
/// `Σ_m W[:, m ky + n] x_m`.
fn add_second_slot(w: &DMatrix<f64>, x: &DVector<f64>, out: &mut nalgebra::DMatrixViewMut<f64>) {
    let ky = out.ncols();
    for n in 0..ky {
        for m in 0..x.len() {
            let c = x[m];
            if c != 0.0 {
                out.column_mut(n).axpy(c, &w.column(m * ky + n), 1.0);
            }
        }
    }
}

fn kron_into(a: &DVector<f64>, b: &DVector<f64>, out: &mut DVector<f64>) {
    let kb = b.len();
    for (m, x) in a.iter().enumerate() {
        for (n, y) in b.iter().enumerate() {
            out[m * kb + n] = x * y;
        }
    }
}

/// Scratch space for reduced evaluations; sized by `k1`, `k2` only.
#[derive(Debug, Clone)]
pub struct ReducedWorkspace {
    aa: DVector<f64>,
    ab: DVector<f64>,
    ba: DVector<f64>,
    bb: DVector<f64>,
    f: DVector<f64>,
    jac: DMatrix<f64>,
}

impl ReducedWorkspace {
    pub fn new(k1: usize, k2: usize) -> Self {
        Self {
            aa: DVector::zeros(k1 * k1),
            ab: DVector::zeros(k1 * k2),
            ba: DVector::zeros(k2 * k1),
            bb: DVector::zeros(k2 * k2),
            f: DVector::zeros(k1 + k2),
            jac: DMatrix::zeros(k1 + k2, k1 + k2),
        }
    }
}

impl ReducedModel {
    /// Build from explicit operators, e.g. a reloaded or synthetic model.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        l_hat: DMatrix<f64>,
        w11: DMatrix<f64>,
        w12: DMatrix<f64>,
        w21: DMatrix<f64>,
        w22: DMatrix<f64>,
        v1: DMatrix<f64>,
        v2: DMatrix<f64>,
    ) -> Result<Self> {
        let (k1, k2) = (v1.ncols(), v2.ncols());
        check_len(v1.nrows(), v2.nrows(), "basis rows")?;
        check_shape(&l_hat, k1 + k2, k1 + k2, "reduced linear operator")?;
        check_shape(&w11, k1, k1 * k1, "W11")?;
        check_shape(&w12, k1, k1 * k2, "W12")?;
        check_shape(&w21, k2, k2 * k1, "W21")?;
        check_shape(&w22, k2, k2 * k2, "W22")?;
        Ok(Self {
            l_hat,
            w11,
            w12,
            w21,
            w22,
            v1,
            v2,
        })
    }

    pub fn k1(&self) -> usize {
        self.v1.ncols()
    }

    pub fn k2(&self) -> usize {
        self.v2.ncols()
    }

    /// Full-order state dimension per species.
    pub fn n(&self) -> usize {
        self.v1.nrows()
    }

    pub fn workspace(&self) -> ReducedWorkspace {
        ReducedWorkspace::new(self.k1(), self.k2())
    }

    fn check_state(&self, u: &ReducedState) -> Result<()> {
        check_len(self.k1(), u.u1_hat.len(), "reduced u1 length")?;
        check_len(self.k2(), u.u2_hat.len(), "reduced u2 length")
    }

    fn rhs_into(&self, a: &DVector<f64>, b: &DVector<f64>, ws: &mut ReducedWorkspace) {
        let k1 = self.k1();
        kron_into(a, a, &mut ws.aa);
        kron_into(a, b, &mut ws.ab);
        kron_into(b, a, &mut ws.ba);
        kron_into(b, b, &mut ws.bb);
        let k2 = self.k2();
        let mut f1 = ws.f.rows_mut(0, k1);
        f1.gemv(1.0, &self.l_hat.view((0, 0), (k1, k1)), a, 0.0);
        f1.gemv(1.0, &self.l_hat.view((0, k1), (k1, k2)), b, 1.0);
        f1.gemv(1.0, &self.w11, &ws.aa, 1.0);
        f1.gemv(1.0, &self.w12, &ws.ab, 1.0);
        let mut f2 = ws.f.rows_mut(k1, k2);
        f2.gemv(1.0, &self.l_hat.view((k1, 0), (k2, k1)), a, 0.0);
        f2.gemv(1.0, &self.l_hat.view((k1, k1), (k2, k2)), b, 1.0);
        f2.gemv(1.0, &self.w22, &ws.bb, 1.0);
        f2.gemv(1.0, &self.w21, &ws.ba, 1.0);
    }

    fn jacobian_into(&self, a: &DVector<f64>, b: &DVector<f64>, ws: &mut ReducedWorkspace) {
        let (k1, k2) = (self.k1(), self.k2());
        ws.jac.copy_from(&self.l_hat);
        {
            let mut j11 = ws.jac.view_mut((0, 0), (k1, k1));
            add_first_slot(&self.w11, a, &mut j11);
            add_second_slot(&self.w11, a, &mut j11);
            add_first_slot(&self.w12, b, &mut j11);
        }
        add_second_slot(&self.w12, a, &mut ws.jac.view_mut((0, k1), (k1, k2)));
        add_second_slot(&self.w21, b, &mut ws.jac.view_mut((k1, 0), (k2, k1)));
        {
            let mut j22 = ws.jac.view_mut((k1, k1), (k2, k2));
            add_first_slot(&self.w22, b, &mut j22);
            add_second_slot(&self.w22, b, &mut j22);
            add_first_slot(&self.w21, a, &mut j22);
        }
    }

    /// `F̂(û)` stacked as `(F̂1, F̂2)`.
    pub fn eval_reduced_rhs(&self, u: &ReducedState) -> Result<DVector<f64>> {
        self.check_state(u)?;
        let mut ws = self.workspace();
        self.rhs_into(&u.u1_hat, &u.u2_hat, &mut ws);
        Ok(ws.f)
    }

    /// Analytic Jacobian of [`Self::eval_reduced_rhs`].
    pub fn eval_reduced_jacobian(&self, u: &ReducedState) -> Result<DMatrix<f64>> {
        self.check_state(u)?;
        let mut ws = self.workspace();
        self.jacobian_into(&u.u1_hat, &u.u2_hat, &mut ws);
        Ok(ws.jac)
    }

    /// One Kahan step: `(I - Δt/2 Ĵ) δ = Δt F̂`, `û ← û + δ`.
    pub fn kahan_step_with(&self, u: &mut ReducedState, dt: f64, ws: &mut ReducedWorkspace) -> Result<()> {
        self.check_state(u)?;
        if !(dt > 0.0) {
            return Err(SktError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let k1 = self.k1();
        self.rhs_into(&u.u1_hat, &u.u2_hat, ws);
        self.jacobian_into(&u.u1_hat, &u.u2_hat, ws);
        let mut system = ws.jac.clone();
        system *= -0.5 * dt;
        for i in 0..system.nrows() {
            system[(i, i)] += 1.0;
        }
        let rhs = &ws.f * dt;
        let delta = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| SktError::SingularSystem(format!("reduced Kahan system at t={}", u.t)))?;
        u.u1_hat += delta.rows(0, k1);
        u.u2_hat += delta.rows(k1, self.k2());
        u.t += dt;
        if !u.is_finite() {
            return Err(SktError::Divergence { t: u.t });
        }
        Ok(())
    }

    pub fn kahan_step(&self, u: &ReducedState, dt: f64) -> Result<ReducedState> {
        let mut next = u.clone();
        self.kahan_step_with(&mut next, dt, &mut self.workspace())?;
        Ok(next)
    }

    /// `(V1ᵀ u1, V2ᵀ u2)`.
    pub fn project(&self, u: &StateVector) -> Result<ReducedState> {
        check_len(self.n(), u.len(), "projected state")?;
        Ok(ReducedState {
            u1_hat: self.v1.tr_mul(&u.u1),
            u2_hat: self.v2.tr_mul(&u.u2),
            t: u.t,
        })
    }

    /// `(V1 û1, V2 û2)`.
    pub fn lift(&self, u: &ReducedState) -> Result<StateVector> {
        self.check_state(u)?;
        StateVector::new(&self.v1 * &u.u1_hat, &self.v2 * &u.u2_hat, u.t)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        for d in [self.n(), self.k1(), self.k2()] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for m in [&self.l_hat, &self.w11, &self.w12, &self.w21, &self.w22, &self.v1, &self.v2] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(SktError::Format(format!("bad reduced-model magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_VERSION {
            return Err(SktError::Format(format!("unsupported reduced-model version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let k1 = read_u64(&mut r)? as usize;
        let k2 = read_u64(&mut r)? as usize;
        let mut read = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = read_f64(&mut r)?;
                }
            }
            Ok(m)
        };
        let l_hat = read(k1 + k2, k1 + k2)?;
        let w11 = read(k1, k1 * k1)?;
        let w12 = read(k1, k1 * k2)?;
        let w21 = read(k2, k2 * k1)?;
        let w22 = read(k2, k2 * k2)?;
        let v1 = read(n, k1)?;
        let v2 = read(n, k2)?;
        Self::from_parts(l_hat, w11, w12, w21, w22, v1, v2)
    }
}

/// Stored reduced coordinates, one column per sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub coeffs1: DMatrix<f64>,
    pub coeffs2: DMatrix<f64>,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, n: usize) -> ReducedState {
        ReducedState {
            u1_hat: self.coeffs1.column(n).into_owned(),
            u2_hat: self.coeffs2.column(n).into_owned(),
            t: self.times[n],
        }
    }

    pub fn last(&self) -> ReducedState {
        self.state(self.len() - 1)
    }

    /// Lifted snapshot matrices `(V1 Û1, V2 Û2)`.
    pub fn lift(&self, model: &ReducedModel) -> Result<(SnapshotMatrix, SnapshotMatrix)> {
        check_len(model.k1(), self.coeffs1.nrows(), "trajectory modes 1")?;
        check_len(model.k2(), self.coeffs2.nrows(), "trajectory modes 2")?;
        Ok((
            SnapshotMatrix::new(&model.v1 * &self.coeffs1, self.times.clone(), Species::U1)?,
            SnapshotMatrix::new(&model.v2 * &self.coeffs2, self.times.clone(), Species::U2)?,
        ))
    }
}

/// Take `steps` Kahan steps from `u0`, storing the initial state, every
/// `store_every`-th step and the last step.
pub fn integrate_rom(
    model: &ReducedModel,
    u0: &ReducedState,
    dt: f64,
    steps: usize,
    store_every: usize,
) -> Result<ReducedTrajectory> {
    model.check_state(u0)?;
    if store_every == 0 {
        return Err(SktError::InvalidParameter("store_every must be >= 1".into()));
    }
    let t0 = u0.t;
    let mut u = u0.clone();
    let mut ws = model.workspace();
    let mut cols1 = u.u1_hat.as_slice().to_vec();
    let mut cols2 = u.u2_hat.as_slice().to_vec();
    let mut times = vec![t0];
    for step in 1..=steps {
        model.kahan_step_with(&mut u, dt, &mut ws)?;
        u.t = t0 + step as f64 * dt;
        if step % store_every == 0 || step == steps {
            cols1.extend_from_slice(u.u1_hat.as_slice());
            cols2.extend_from_slice(u.u2_hat.as_slice());
            times.push(u.t);
        }
    }
    let nt = times.len();
    Ok(ReducedTrajectory {
        times,
        coeffs1: DMatrix::from_vec(model.k1(), nt, cols1),
        coeffs2: DMatrix::from_vec(model.k2(), nt, cols2),
    })
}
