//! Two-window principal interval decomposition and the reduced-model
//! pipelines built on it.
//!
//! The transition index is the first stored sample after which neither
//! species' average density changes by more than `tol_pid`. Both windows
//! contain the interface sample.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SktError};
use crate::fom::{FomOperators, StateVector};
use crate::grid::SpatialGrid;
use crate::par;
use crate::pod::{build_basis, PodBasis};
use crate::rom::{assemble_rom, integrate_rom, ReducedModel, ReducedState, ReducedTrajectory};
use crate::rsvd::RsvdOptions;
use crate::snapshots::{SnapshotMatrix, Species};

/// Average density `(1/|Ω|) ∫ u dΩ` by the trapezoidal rule.
pub fn average_density(u: &[f64], grid: &SpatialGrid) -> f64 {
    grid.integrate(u) / grid.measure()
}

/// Average density of every stored sample.
pub fn density_series(s: &SnapshotMatrix, grid: &SpatialGrid) -> Result<Vec<f64>> {
    check_len(grid.len(), s.n_states(), "snapshot rows")?;
    Ok((0..s.len()).map(|j| average_density(s.column(j), grid)).collect())
}

/// Split of the stored samples into a transient and a steady window.
#[derive(Debug, Clone, PartialEq)]
pub struct PidPartition {
    /// 0-based sample index of the interface, in `1..=N_t-2`.
    pub index: usize,
    pub t_p: f64,
    pub window1: RangeInclusive<usize>,
    pub window2: RangeInclusive<usize>,
    pub tol_pid: f64,
}

/// First interface index where both density increments fall below
/// `tol_pid`, or `None` when the series never settles.
pub fn find_transition(
    densities1: &[f64],
    densities2: &[f64],
    times: &[f64],
    tol_pid: f64,
) -> Result<Option<PidPartition>> {
    let nt = densities1.len();
    check_len(nt, densities2.len(), "density series")?;
    check_len(nt, times.len(), "density times")?;
    if nt < 3 {
        return Err(SktError::InvalidSize(format!(
            "transition search needs at least 3 samples, got {nt}"
        )));
    }
    if !(tol_pid > 0.0) {
        return Err(SktError::InvalidParameter(format!(
            "PID tolerance must be positive, got {tol_pid}"
        )));
    }
    let settled = |q: usize| {
        (densities1[q] - densities1[q - 1]).abs() < tol_pid
            && (densities2[q] - densities2[q - 1]).abs() < tol_pid
    };
    Ok((1..=nt - 2).find(|&q| settled(q)).map(|q| PidPartition {
        index: q,
        t_p: times[q],
        window1: 0..=q,
        window2: q..=nt - 1,
        tol_pid,
    }))
}

/// Per-window bases for both species.
#[derive(Debug, Clone)]
pub struct WindowedBases {
    pub first: (PodBasis, PodBasis),
    pub second: (PodBasis, PodBasis),
}

fn basis_pair(s1: &SnapshotMatrix, s2: &SnapshotMatrix, ric_tol: f64, opts: RsvdOptions) -> Result<(PodBasis, PodBasis)> {
    let (b1, b2) = par::join(|| build_basis(s1, ric_tol, opts), || build_basis(s2, ric_tol, opts));
    Ok((b1?, b2?))
}

pub fn build_windowed_bases(
    s1: &SnapshotMatrix,
    s2: &SnapshotMatrix,
    partition: &PidPartition,
    ric_tol: f64,
    opts: RsvdOptions,
) -> Result<WindowedBases> {
    let first = basis_pair(
        &s1.window(partition.window1.clone())?,
        &s2.window(partition.window1.clone())?,
        ric_tol,
        opts,
    )?;
    let second = basis_pair(
        &s1.window(partition.window2.clone())?,
        &s2.window(partition.window2.clone())?,
        ric_tol,
        opts,
    )?;
    Ok(WindowedBases { first, second })
}

/// `V_newᵀ V_old`, mapping old reduced coordinates to new ones.
pub fn transfer_matrix(v_old: &DMatrix<f64>, v_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(v_old.nrows(), v_new.nrows(), "basis rows")?;
    Ok(v_new.tr_mul(v_old))
}

/// `V_newᵀ V_old û_old`: the least-squares representation of the lifted
/// interface state in the new basis.
pub fn interface_transfer(v_old: &DMatrix<f64>, v_new: &DMatrix<f64>, u_old: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(v_old.ncols(), u_old.len(), "interface coordinates")?;
    Ok(transfer_matrix(v_old, v_new)? * u_old)
}

/// `‖(I - V_new V_newᵀ) V_old û_old‖ / ‖V_old û_old‖`.
pub fn interface_residual(v_old: &DMatrix<f64>, v_new: &DMatrix<f64>, u_old: &DVector<f64>) -> Result<f64> {
    let lifted = v_old * u_old;
    let norm = lifted.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let back = v_new * interface_transfer(v_old, v_new, u_old)?;
    Ok((lifted - back).norm() / norm)
}

/// Everything the online stage needs besides the models themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlinePlan {
    pub dt: f64,
    pub steps: usize,
    pub store_every: usize,
    /// Step at which the second model takes over.
    pub switch_step: Option<usize>,
    pub t0: f64,
    pub initial_u1: Vec<f64>,
    pub initial_u2: Vec<f64>,
}

/// Reduced trajectories of an online run and their lift to the full space.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub trajectories: Vec<ReducedTrajectory>,
    pub u1: SnapshotMatrix,
    pub u2: SnapshotMatrix,
    /// Relative interface projection residual per species.
    pub interface_residual: Option<(f64, f64)>,
    /// Wall-clock time spent in reduced stepping.
    pub online: Duration,
}

/// Integrate one model, or two models chained at `switch_step`.
pub fn run_online(models: &[ReducedModel], plan: &OnlinePlan) -> Result<OnlineRun> {
    let u0 = ReducedState {
        u1_hat: DVector::from_column_slice(&plan.initial_u1),
        u2_hat: DVector::from_column_slice(&plan.initial_u2),
        t: plan.t0,
    };
    match (models, plan.switch_step) {
        ([model], None) => {
            let start = Instant::now();
            let traj = integrate_rom(model, &u0, plan.dt, plan.steps, plan.store_every)?;
            let online = start.elapsed();
            let (u1, u2) = traj.lift(model)?;
            Ok(OnlineRun {
                trajectories: vec![traj],
                u1,
                u2,
                interface_residual: None,
                online,
            })
        }
        ([m1, m2], Some(switch)) => {
            if switch == 0 || switch >= plan.steps || switch % plan.store_every != 0 {
                return Err(SktError::InvalidParameter(format!(
                    "switch step {switch} must lie strictly inside 0..{} on the storage stride {}",
                    plan.steps, plan.store_every
                )));
            }
            let t1 = transfer_matrix(&m1.v1, &m2.v1)?;
            let t2 = transfer_matrix(&m1.v2, &m2.v2)?;
            let start = Instant::now();
            let traj1 = integrate_rom(m1, &u0, plan.dt, switch, plan.store_every)?;
            let at_switch = traj1.last();
            let handed = ReducedState {
                u1_hat: &t1 * &at_switch.u1_hat,
                u2_hat: &t2 * &at_switch.u2_hat,
                t: plan.t0 + switch as f64 * plan.dt,
            };
            let mut traj2 = integrate_rom(m2, &handed, plan.dt, plan.steps - switch, plan.store_every)?;
            let online = start.elapsed();
            let tail = plan.steps - switch;
            for (j, t) in traj2.times.iter_mut().enumerate() {
                let local = (j * plan.store_every).min(tail);
                *t = plan.t0 + (switch + local) as f64 * plan.dt;
            }
            let residual = (
                interface_residual(&m1.v1, &m2.v1, &at_switch.u1_hat)?,
                interface_residual(&m1.v2, &m2.v2, &at_switch.u2_hat)?,
            );
            let (a1, a2) = traj1.lift(m1)?;
            let (b1, b2) = traj2.lift(m2)?;
            let stitch = |a: &SnapshotMatrix, b: &SnapshotMatrix, species| {
                let n = a.n_states();
                let mut cols = a.data().as_slice().to_vec();
                cols.extend_from_slice(&b.data().as_slice()[n..]);
                let mut times = a.times().to_vec();
                times.extend_from_slice(&b.times()[1..]);
                SnapshotMatrix::from_columns(n, cols, times, species)
            };
            Ok(OnlineRun {
                u1: stitch(&a1, &b1, Species::U1)?,
                u2: stitch(&a2, &b2, Species::U2)?,
                trajectories: vec![traj1, traj2],
                interface_residual: Some(residual),
                online,
            })
        }
        _ => Err(SktError::InvalidParameter(format!(
            "{} reduced models do not match switch step {:?}",
            models.len(),
            plan.switch_step
        ))),
    }
}

/// Basis and stepping options shared by both reduction strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionSettings {
    pub ric_tol: f64,
    pub rsvd: RsvdOptions,
    pub dt: f64,
    /// Total number of reduced steps from the initial state.
    pub steps: usize,
    pub store_every: usize,
}

/// Reduced models, partition and the stitched online result.
#[derive(Debug, Clone)]
pub struct RomRun {
    pub models: Vec<ReducedModel>,
    pub partition: Option<PidPartition>,
    pub plan: OnlinePlan,
    pub online: OnlineRun,
    /// Basis computation plus operator assembly.
    pub offline: Duration,
}

impl RomRun {
    /// `(k1, k2)` per window.
    pub fn mode_counts(&self) -> Vec<(usize, usize)> {
        self.models.iter().map(|m| (m.k1(), m.k2())).collect()
    }
}

fn plan_for(model: &ReducedModel, u0: &StateVector, settings: &ReductionSettings, switch_step: Option<usize>) -> Result<OnlinePlan> {
    let r0 = model.project(u0)?;
    Ok(OnlinePlan {
        dt: settings.dt,
        steps: settings.steps,
        store_every: settings.store_every,
        switch_step,
        t0: u0.t,
        initial_u1: r0.u1_hat.as_slice().to_vec(),
        initial_u2: r0.u2_hat.as_slice().to_vec(),
    })
}

/// One basis per species over all training snapshots.
pub fn run_gpod(
    ops: &FomOperators,
    s1: &SnapshotMatrix,
    s2: &SnapshotMatrix,
    u0: &StateVector,
    settings: &ReductionSettings,
) -> Result<RomRun> {
    let start = Instant::now();
    let (b1, b2) = basis_pair(s1, s2, settings.ric_tol, settings.rsvd)?;
    let model = assemble_rom(ops, &b1, &b2)?;
    let offline = start.elapsed();
    let plan = plan_for(&model, u0, settings, None)?;
    let models = vec![model];
    let online = run_online(&models, &plan)?;
    Ok(RomRun {
        models,
        partition: None,
        plan,
        online,
        offline,
    })
}

/// Separate bases before and after the density transition; falls back to
/// [`run_gpod`] when no transition is found in the training data.
pub fn run_ppod(
    ops: &FomOperators,
    s1: &SnapshotMatrix,
    s2: &SnapshotMatrix,
    u0: &StateVector,
    settings: &ReductionSettings,
    tol_pid: f64,
) -> Result<RomRun> {
    let grid = ops.grid();
    let partition = find_transition(
        &density_series(s1, grid)?,
        &density_series(s2, grid)?,
        s1.times(),
        tol_pid,
    )?;
    let Some(partition) = partition else {
        log::info!("no density transition below {tol_pid}; using a single window");
        return run_gpod(ops, s1, s2, u0, settings);
    };
    let switch_step = ((partition.t_p - s1.times()[0]) / settings.dt).round() as usize;

    let start = Instant::now();
    let bases = build_windowed_bases(s1, s2, &partition, settings.ric_tol, settings.rsvd)?;
    let (m1, m2) = par::join(
        || assemble_rom(ops, &bases.first.0, &bases.first.1),
        || assemble_rom(ops, &bases.second.0, &bases.second.1),
    );
    let models = vec![m1?, m2?];
    let offline = start.elapsed();
    let plan = plan_for(&models[0], u0, settings, Some(switch_step))?;
    let online = run_online(&models, &plan)?;
    Ok(RomRun {
        models,
        partition: Some(partition),
        plan,
        online,
        offline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{assemble_fom, integrate_fom, random_perturbed_initial, TimeGrid};
    use crate::grid::Axis;
    use crate::params::SktParams;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn grid_1d(n: usize) -> SpatialGrid {
        SpatialGrid::new_1d(Axis::new(-PI, PI, n).unwrap()).unwrap()
    }

    #[test]
    fn densities_of_simple_fields() {
        let g = grid_1d(40);
        assert!((average_density(&vec![2.5; 40], &g) - 2.5).abs() < 1e-14);
        let x = g.x_axis().nodes();
        let h = g.dx();
        let mut sum = 0.0;
        for (j, xj) in x.iter().enumerate() {
            let w = if j == 0 || j == 39 { h / 2.0 } else { h };
            sum += w * xj;
        }
        let expected = sum / (39.0 * h);
        assert!((average_density(&x, &g) - expected).abs() < 1e-14);
        let g2 = SpatialGrid::new_2d(
            Axis::new(0.0, 2f64.sqrt() * PI, 7).unwrap(),
            Axis::new(0.0, 2.0 * PI, 5).unwrap(),
        )
        .unwrap();
        assert!((average_density(&vec![1.0; 35], &g2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_series_settles_immediately() {
        let d = vec![1.0; 6];
        let times: Vec<f64> = (0..6).map(|j| j as f64 * 0.1).collect();
        let p = find_transition(&d, &d, &times, 1e-8).unwrap().unwrap();
        assert_eq!(p.index, 1);
        assert_eq!(p.window1, 0..=1);
        assert_eq!(p.window2, 1..=5);
        assert!((p.t_p - 0.1).abs() < 1e-15);
    }

    #[test]
    fn transition_needs_both_species() {
        let times: Vec<f64> = (0..6).map(|j| j as f64).collect();
        let d1 = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let d2 = [0.0, 1.0, 2.0, 2.5, 2.5, 2.5];
        assert_eq!(find_transition(&d1, &d2, &times, 1e-3).unwrap().unwrap().index, 4);
        let growing = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(find_transition(&d1, &growing, &times, 0.5).unwrap().is_none());
        assert!(find_transition(&d1[..2], &d2[..2], &times[..2], 0.1).is_err());
        assert!(find_transition(&d1, &d2, &times, 0.0).is_err());
    }

    #[test]
    fn transfer_is_least_squares_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = |k| {
            DMatrix::<f64>::from_fn(30, k, |_, _| StandardNormal.sample(&mut rng))
                .qr()
                .q()
        };
        let (v_old, v_new) = (q(4), q(5));
        let u_old = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = interface_transfer(&v_old, &v_new, &u_old).unwrap();
        let ls = v_new.clone().svd(true, true).solve(&(&v_old * &u_old), 1e-14).unwrap();
        assert!((&x - &ls).amax() < 1e-12);

        let same = interface_transfer(&v_old, &v_old, &u_old).unwrap();
        assert!((same - &u_old).amax() < 1e-13);
        assert!(interface_residual(&v_old, &v_old, &u_old).unwrap() < 1e-13);
        assert!(interface_residual(&v_old, &v_new, &u_old).unwrap() > 1e-3);
    }

    fn short_run(steps: usize) -> (FomOperators, StateVector, crate::fom::FomRun) {
        let grid = grid_1d(32);
        let params = SktParams::pattern_1d();
        let ops = assemble_fom(&grid, &params).unwrap();
        let u0 = random_perturbed_initial(&grid, &params, 0.01, 4).unwrap();
        let run = integrate_fom(&ops, &u0, TimeGrid::new(1e-3, steps as f64 * 1e-3).unwrap(), None, 1).unwrap();
        (ops, u0, run)
    }

    fn settings(steps: usize) -> ReductionSettings {
        ReductionSettings {
            ric_tol: 1e-6,
            rsvd: RsvdOptions::default(),
            dt: 1e-3,
            steps,
            store_every: 1,
        }
    }

    #[test]
    fn no_transition_falls_back_to_global_pod() {
        let (ops, u0, run) = short_run(40);
        let g = run_gpod(&ops, &run.s1, &run.s2, &u0, &settings(40)).unwrap();
        let p = run_ppod(&ops, &run.s1, &run.s2, &u0, &settings(40), 1e-300).unwrap();
        assert!(p.partition.is_none());
        assert_eq!(p.models, g.models);
        assert_eq!(p.online.u1, g.online.u1);
        assert_eq!(p.online.u2, g.online.u2);
    }

    #[test]
    fn full_window_basis_equals_global_basis() {
        let (_, _, run) = short_run(20);
        let all = run.s1.window(0..=run.s1.len() - 1).unwrap();
        let a = build_basis(&all, 1e-6, RsvdOptions::default()).unwrap();
        let b = build_basis(&run.s1, 1e-6, RsvdOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_partition_still_runs() {
        let (ops, u0, run) = short_run(30);
        let p = run_ppod(&ops, &run.s1, &run.s2, &u0, &settings(30), 1e3).unwrap();
        let part = p.partition.as_ref().unwrap();
        assert_eq!(part.index, 1);
        assert_eq!(p.models.len(), 2);
        assert_eq!(p.online.u1.len(), run.s1.len());
        assert_eq!(p.online.u1.times(), run.s1.times());
        let (r1, r2) = p.online.interface_residual.unwrap();
        assert!(r1.is_finite() && r2.is_finite());
    }

    #[test]
    fn chained_run_continues_from_transferred_state() {
        let (ops, u0, run) = short_run(30);
        let p = run_ppod(&ops, &run.s1, &run.s2, &u0, &settings(30), 1e3).unwrap();
        let traj2 = &p.online.trajectories[1];
        let expected = transfer_matrix(&p.models[0].v1, &p.models[1].v1).unwrap()
            * p.online.trajectories[0].last().u1_hat;
        assert_eq!(traj2.state(0).u1_hat, expected);
    }

    proptest! {
        #[test]
        fn transition_index_monotone_in_tolerance(
            seed in any::<u64>(),
            t1 in 1e-6f64..1.0,
            t2 in 1e-6f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut walk = |scale: f64| {
                let mut d = vec![0.0];
                for j in 1..30 {
                    let step: f64 = StandardNormal.sample(&mut rng);
                    d.push(d[j - 1] + scale * step / j as f64);
                }
                d
            };
            let (d1, d2) = (walk(0.5), walk(0.3));
            let times: Vec<f64> = (0..30).map(|j| j as f64).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let p_lo = find_transition(&d1, &d2, &times, lo).unwrap().map(|p| p.index);
            let p_hi = find_transition(&d1, &d2, &times, hi).unwrap().map(|p| p.index);
            if let Some(lo_idx) = p_lo {
                prop_assert!(p_hi.is_some_and(|h| h <= lo_idx));
            }
        }
    }
}
