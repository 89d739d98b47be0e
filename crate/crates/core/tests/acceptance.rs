//! Acceptance suite. Runs every criterion in order and prints one PASS/FAIL
//! line each; the process fails if any criterion fails.
//!
//! `SKT_ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use skt_rom::config::ExperimentConfig;
use skt_rom::experiment::{run_experiment, ExperimentReport, Method, RunKind};
use skt_rom::fom::{integrate_fom, random_perturbed_initial, TimeGrid};
use skt_rom::rom::{assemble_rom_from_bases, integrate_rom};
use skt_rom::rsvd::{dense_svd, rsvd, RsvdOptions};
use skt_rom::tensor::{build_reduced_tensor, build_reduced_tensor_rowwise};
use skt_rom::{
    assemble_fom, Axis, ReducedModel, ReducedState, SktParams, SpatialGrid, StateVector,
};

type Check = Result<(bool, String), String>;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::<f64>::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(rows, cols, rng).qr().q()
}

fn lift_evaluate_project(model: &ReducedModel, ops: &skt_rom::FomOperators, u: &ReducedState) -> DVector<f64> {
    let full = StateVector::new(&model.v1 * &u.u1_hat, &model.v2 * &u.u2_hat, 0.0).unwrap();
    let f = ops.eval_rhs(&full).unwrap();
    let n = model.n();
    let p1 = model.v1.tr_mul(&f.rows(0, n));
    let p2 = model.v2.tr_mul(&f.rows(n, n));
    DVector::from_iterator(p1.len() + p2.len(), p1.iter().chain(p2.iter()).copied())
}

/// Reduced right-hand side against lift, full evaluation and projection.
fn tensor_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let cases = 60;
    for case in 0..cases {
        let (grid, params) = if case % 3 == 2 {
            let nx = rng.random_range(3..=14);
            let ny = rng.random_range(3..=200 / nx);
            let g = SpatialGrid::new_2d(Axis::new(0.0, 4.4, nx).unwrap(), Axis::new(0.0, 6.3, ny).unwrap()).unwrap();
            (g, SktParams::pattern_2d())
        } else {
            let n = rng.random_range(16..=200);
            (SpatialGrid::new_1d(Axis::new(-3.0, 3.0, n).unwrap()).unwrap(), SktParams::pattern_1d())
        };
        let n = grid.len();
        let ops = assemble_fom(&grid, &params).map_err(|e| e.to_string())?;
        let k1 = rng.random_range(1..=15.min(n));
        let k2 = rng.random_range(1..=15.min(n));
        let model = assemble_rom_from_bases(&ops, &orthonormal(n, k1, &mut rng), &orthonormal(n, k2, &mut rng))
            .map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let u = ReducedState {
                u1_hat: DVector::from_fn(k1, |_, _| StandardNormal.sample(&mut rng)),
                u2_hat: DVector::from_fn(k2, |_, _| StandardNormal.sample(&mut rng)),
                t: 0.0,
            };
            let fast = model.eval_reduced_rhs(&u).map_err(|e| e.to_string())?;
            let slow = lift_evaluate_project(&model, &ops, &u);
            worst = worst.max((&fast - &slow).norm() / slow.norm());
        }
    }
    Ok((worst <= 1e-12, format!("{cases} systems, worst relative deviation {worst:.2e}")))
}

fn random_lq_system(rng: &mut ChaCha8Rng) -> ReducedModel {
    let (k1, k2) = (5, 5);
    let k = k1 + k2;
    let l = -DMatrix::<f64>::identity(k, k) + 0.3 * gaussian(k, k, rng);
    let w = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| 0.2 * gaussian(rows, cols, rng);
    ReducedModel::from_parts(
        l,
        w(k1, k1 * k1, rng),
        w(k1, k1 * k2, rng),
        w(k2, k2 * k1, rng),
        w(k2, k2 * k2, rng),
        DMatrix::identity(k1, k1),
        DMatrix::identity(k2, k2),
    )
    .unwrap()
}

fn solve_to(model: &ReducedModel, u0: &ReducedState, t_end: f64, steps: usize) -> DVector<f64> {
    let traj = integrate_rom(model, u0, t_end / steps as f64, steps, steps).unwrap();
    traj.last().stacked()
}

/// Observed order by Richardson self-reference, and the Runge–Kutta form.
fn kahan_order() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_lq_system(&mut rng);
    let u0 = ReducedState {
        u1_hat: DVector::from_fn(5, |_, _| rng.random_range(-0.5..0.5)),
        u2_hat: DVector::from_fn(5, |_, _| rng.random_range(-0.5..0.5)),
        t: 0.0,
    };
    let levels: Vec<usize> = (0..6).map(|j| 20 << j).collect();
    let sols: Vec<DVector<f64>> = levels.iter().map(|&s| solve_to(&model, &u0, 1.0, s)).collect();
    let diffs: Vec<f64> = sols.windows(2).map(|w| (&w[0] - &w[1]).norm()).collect();
    let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    let order = *orders.last().unwrap();

    let mut rk_gap: f64 = 0.0;
    let split = |v: &DVector<f64>| ReducedState {
        u1_hat: v.rows(0, 5).into_owned(),
        u2_hat: v.rows(5, 5).into_owned(),
        t: 0.0,
    };
    for dt in [0.1, 0.05, 0.01] {
        let next = model.kahan_step(&u0, dt).unwrap();
        let (a, b) = (u0.stacked(), next.stacked());
        let f = |v: &DVector<f64>| model.eval_reduced_rhs(&split(v)).unwrap();
        let mid = (&a + &b) * 0.5;
        let rk = &a + (f(&a) * -0.5 + f(&mid) * 2.0 - f(&b) * 0.5) * dt;
        rk_gap = rk_gap.max((&rk - &b).norm() / b.norm());
    }
    let pass = (order - 2.0).abs() <= 0.1 && rk_gap <= 1e-10;
    let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    Ok((pass, format!("orders [{}], RK form gap {rk_gap:.1e}", shown.join(", "))))
}

fn monotone_and_ppod(report: &ExperimentReport, tols: &[f64], notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    let g: Vec<_> = tols.iter().map(|&t| report.rom(Method::Gpod, t).unwrap()).collect();
    let p: Vec<_> = tols.iter().map(|&t| report.rom(Method::Ppod, t).unwrap()).collect();
    for w in g.windows(2) {
        if !(w[1].error_u < w[0].error_u && w[1].error_v < w[0].error_v) {
            ok = false;
            notes.push(format!("G-POD error not decreasing from {:e} to {:e}", w[0].tol_ric, w[1].tol_ric));
        }
    }
    for (a, b) in g.iter().zip(&p) {
        if !(b.error_u <= a.error_u && b.error_v <= a.error_v) {
            ok = false;
            notes.push(format!(
                "P-POD above G-POD at {:e} ({:.3e}/{:.3e} vs {:.3e}/{:.3e})",
                a.tol_ric, b.error_u, b.error_v, a.error_u, a.error_v
            ));
        }
        if b.modes.len() == 2 {
            let ((a1, a2), (b1, b2)) = (b.modes[0], b.modes[1]);
            if b1 > a1 || b2 > a2 {
                ok = false;
                notes.push(format!("window-2 modes exceed window-1 at {:e}", b.tol_ric));
            }
        } else {
            ok = false;
            notes.push(format!("P-POD found no transition at {:e}", b.tol_ric));
        }
    }
    let rows: Vec<String> = tols
        .iter()
        .zip(g.iter().zip(&p))
        .map(|(t, (a, b))| {
            let pm: Vec<String> = b.modes.iter().map(|(x, y)| format!("{x}({y})")).collect();
            format!(
                "{t:e}: G {}({}) {:.2e}/{:.2e} P {} {:.2e}/{:.2e}",
                a.modes[0].0,
                a.modes[0].1,
                a.error_u,
                a.error_v,
                pm.join("+"),
                b.error_u,
                b.error_v
            )
        })
        .collect();
    notes.push(rows.join("; "));
    ok
}

fn pattern_run(report: &ExperimentReport, elapsed: Duration, steady: (f64, f64), limit: Duration) -> Check {
    let tols = [1e-3, 1e-4, 1e-5, 1e-6];
    let mut notes = Vec::new();
    let mut ok = true;
    match report.fom.steady_time {
        Some(t) if t >= steady.0 && t <= steady.1 => notes.push(format!("steady t={t}")),
        other => {
            ok = false;
            notes.push(format!("steady time {other:?} outside [{}, {}]", steady.0, steady.1));
        }
    }
    ok &= monotone_and_ppod(report, &tols, &mut notes);
    if elapsed > limit {
        ok = false;
        notes.push(format!("runtime {elapsed:.0?} over {limit:.0?}"));
    }
    Ok((ok, notes.join("; ")))
}

fn one_dimensional(report: &ExperimentReport, elapsed: Duration) -> Check {
    let (mut ok, mut detail) = pattern_run(report, elapsed, (8.0, 15.0), Duration::from_secs(300))?;
    let amp = report.fom.pattern_amplitude;
    if amp <= 0.1 {
        ok = false;
    }
    detail.push_str(&format!("; pattern amplitude {amp:.3}; sweep {elapsed:.0?}"));
    let g = report.rom(Method::Gpod, 1e-4).unwrap();
    if g.error_u > 5e-3 || g.error_v > 5e-3 {
        ok = false;
        detail.push_str(&format!("; G-POD error at 1e-4 {:.2e}/{:.2e} above 5e-3", g.error_u, g.error_v));
    }
    Ok((ok, detail))
}

fn transition_window(t_p: Option<f64>, lo: f64, hi: f64) -> Check {
    Ok((t_p.is_some_and(|t| t >= lo && t <= hi), format!("t_p = {t_p:?}, window [{lo}, {hi}]")))
}

fn two_dimensional() -> Check {
    let cfg = config("skt2d_desk.cfg");
    let start = Instant::now();
    let report = run_experiment(&cfg, RunKind::Sweep, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (mut ok, mut detail) = pattern_run(&report, elapsed, (2.0, 5.0), Duration::from_secs(900))?;
    let (tp_ok, tp) = transition_window(report.fom.transition_time, 0.2, 1.0)?;
    ok &= tp_ok;
    detail.push_str(&format!("; {tp}; {elapsed:.0?}"));
    Ok((ok, detail))
}

fn entropy_decay() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["entropy1d.cfg", "entropy2d.cfg"] {
        let cfg = config(name);
        if cfg.params.reaction != 0.0 || cfg.rom.tol_ric != 1e-5 {
            return Err(format!("{name} must disable the reaction and use tol_ric 1e-5"));
        }
        let report = run_experiment(&cfg, RunKind::Rom, None).map_err(|e| e.to_string())?;
        let rom = &report.roms[0];
        let pass = report.fom.entropy_decreasing && rom.entropy_decreasing;
        ok &= pass;
        notes.push(format!(
            "{name}: FOM {} (max rise {:.1e}), ROM {} (max rise {:.1e})",
            report.fom.entropy_decreasing,
            report.fom.entropy_max_violation,
            rom.entropy_decreasing,
            rom.entropy_max_violation
        ));
    }
    Ok((ok, notes.join("; ")))
}

/// Bases spanning a short full-order trajectory reproduce it.
fn exact_subspace() -> Check {
    let grid = SpatialGrid::new_1d(Axis::new(-std::f64::consts::PI, std::f64::consts::PI, 60).unwrap()).unwrap();
    let params = SktParams::pattern_1d();
    let ops = assemble_fom(&grid, &params).map_err(|e| e.to_string())?;
    let u0 = random_perturbed_initial(&grid, &params, 0.3, 4).map_err(|e| e.to_string())?;
    let steps = 20;
    let fom = integrate_fom(&ops, &u0, TimeGrid::new(1e-3, steps as f64 * 1e-3).unwrap(), None, 1)
        .map_err(|e| e.to_string())?;
    let span = |s: &DMatrix<f64>| {
        let f = dense_svd(s);
        let r = f.singular_values.iter().filter(|&&v| v > 1e-13 * f.singular_values[0]).count();
        f.u.columns(0, r).into_owned()
    };
    let (v1, v2) = (span(fom.s1.data()), span(fom.s2.data()));
    let model = assemble_rom_from_bases(&ops, &v1, &v2).map_err(|e| e.to_string())?;
    let traj = integrate_rom(&model, &model.project(&u0).unwrap(), 1e-3, steps, 1).map_err(|e| e.to_string())?;
    let (r1, r2) = traj.lift(&model).map_err(|e| e.to_string())?;
    let dev = (r1.data() - fom.s1.data()).amax().max((r2.data() - fom.s2.data()).amax());
    Ok((dev <= 1e-8, format!("k = ({}, {}), max deviation {dev:.2e}", v1.ncols(), v2.ncols())))
}

/// Leading singular values of fast-decay matrices.
fn rsvd_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for (rows, cols, decay) in [(400, 300, 0.5), (1000, 200, 0.7), (300, 600, 0.3)] {
        let r = rows.min(cols);
        let u = orthonormal(rows, r, &mut rng);
        let v = orthonormal(cols, r, &mut rng);
        let s = DVector::from_fn(r, |i, _| f64::powf(10.0, -decay * i as f64));
        let a = &u * DMatrix::from_diagonal(&s) * v.transpose();
        let dense = dense_svd(&a);
        let fast = rsvd(&a, 10, RsvdOptions::default()).map_err(|e| e.to_string())?;
        for i in 0..10 {
            let d = dense.singular_values[i];
            worst = worst.max((fast.singular_values[i] - d).abs() / d);
        }
    }
    Ok((worst <= 1e-6, format!("worst relative deviation {worst:.2e}")))
}

fn prediction() -> Check {
    let cfg = config("predict1d.cfg");
    let report = run_experiment(&cfg, RunKind::Rom, None).map_err(|e| e.to_string())?;
    let rom = &report.roms[0];
    let pass = rom.final_error_u <= 5e-2 && rom.final_error_v <= 5e-2;
    Ok((
        pass,
        format!(
            "trained to t={:?} with tol_ric {:e}, modes {:?}, final errors at t={} {:.3e}/{:.3e}",
            rom.training_horizon, rom.tol_ric, rom.modes, report.fom.final_time, rom.final_error_u, rom.final_error_v
        ),
    ))
}

fn min_time(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

/// Online cost independent of N, offline cost growing with N, batched tensor
/// construction faster than the per-row loop.
fn offline_online_timing() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let k = 12;
    let params = SktParams::pattern_2d();
    let mut online = Vec::new();
    let mut offline = Vec::new();
    let mut tensor = Vec::new();
    for n in [50, 100] {
        let grid = SpatialGrid::new_2d(Axis::new(0.0, 4.44, n).unwrap(), Axis::new(0.0, 6.28, n).unwrap()).unwrap();
        let ops = assemble_fom(&grid, &params).map_err(|e| e.to_string())?;
        let (v1, v2) = (orthonormal(n * n, k, &mut rng), orthonormal(n * n, k, &mut rng));
        let mut model = None;
        offline.push(min_time(3, || model = Some(assemble_rom_from_bases(&ops, &v1, &v2).unwrap())));
        let model = model.unwrap();
        let u0 = ReducedState {
            u1_hat: DVector::from_fn(k, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal)),
            u2_hat: DVector::from_fn(k, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal)),
            t: 0.0,
        };
        let steps = 2000;
        online.push(min_time(7, || {
            integrate_rom(&model, &u0, 1e-4, steps, steps).unwrap();
        }) / steps as u32);
        let (w1, w2) = (orthonormal(n * n, 20, &mut rng), orthonormal(n * n, 20, &mut rng));
        let batched = min_time(3, || {
            build_reduced_tensor(&w1, &w2).unwrap();
        });
        let rowwise = min_time(3, || {
            build_reduced_tensor_rowwise(&w1, &w2).unwrap();
        });
        tensor.push((batched, rowwise));
    }
    let spread = (online[1].as_secs_f64() - online[0].as_secs_f64()).abs() / online[0].as_secs_f64();
    let pass = spread < 0.2 && offline[1] > offline[0] && tensor.iter().all(|(b, r)| b < r);
    Ok((
        pass,
        format!(
            "online/step {:.2?} vs {:.2?} ({:.1}% apart), offline {:.2?} vs {:.2?}, tensor k=20 batched/rowwise {:.2?}/{:.2?} and {:.2?}/{:.2?}",
            online[0],
            online[1],
            100.0 * spread,
            offline[0],
            offline[1],
            tensor[0].0,
            tensor[0].1,
            tensor[1].0,
            tensor[1].1
        ),
    ))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("SKT_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|v| v.contains(&n));

    let mut results = Vec::new();
    let mut record = |n: usize, title: &str, check: &mut dyn FnMut() -> Check| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict} [{title}] ({:.1?}) {detail}", start.elapsed());
        results.push(pass);
    };

    record(1, "tensor equivalence", &mut || {
        let start = Instant::now();
        let (ok, d) = tensor_equivalence()?;
        Ok((ok && start.elapsed() < Duration::from_secs(10), d))
    });
    record(2, "Kahan order", &mut || {
        let start = Instant::now();
        let (ok, d) = kahan_order()?;
        Ok((ok && start.elapsed() < Duration::from_secs(5), d))
    });

    let mut sweep_1d: Option<(ExperimentReport, Duration)> = None;
    if wanted(3) || wanted(4) {
        let start = Instant::now();
        match run_experiment(&config("skt1d.cfg"), RunKind::Sweep, None) {
            Ok(r) => sweep_1d = Some((r, start.elapsed())),
            Err(e) => println!("1D sweep failed: {e}"),
        }
    }
    record(3, "1D end-to-end", &mut || match &sweep_1d {
        Some((r, t)) => one_dimensional(r, *t),
        None => Err("no 1D run".into()),
    });
    record(4, "1D transition", &mut || match &sweep_1d {
        Some((r, _)) => transition_window(r.fom.transition_time, 3.0, 6.0),
        None => Err("no 1D run".into()),
    });
    record(5, "2D desk-scale run", &mut two_dimensional);
    record(6, "entropy decay", &mut entropy_decay);
    record(7, "exact-subspace reproduction", &mut exact_subspace);
    record(8, "rSVD fidelity", &mut rsvd_fidelity);
    record(9, "prediction", &mut prediction);
    record(10, "offline/online separation", &mut offline_online_timing);

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
