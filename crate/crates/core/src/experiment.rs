//! End-to-end experiment pipeline: full-order run, reduction, comparison and
//! artifact persistence.
//!
//! Output directory layout:
//!
//! ```text
//! config.cfg            resolved configuration
//! report.toml           deterministic summary
//! timings.toml          wall-clock timings
//! tables.csv            convergence table
//! fom_diagnostics.csv   per-step diagnostics of the full-order run
//! fom_u1.skts, ...      snapshot binaries (plus CSV on request)
//! fields/               field dumps
//! rom_<method>_<tol>/   models, online manifest, lifted trajectory, diagnostics
//! ```

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridSpec, InitialKind, RomMode};
use crate::diagnostics::{
    check_entropy_decay, default_decay_slack, relative_l2_error, relative_l2_error_at, DiagnosticsSeries,
    EntropyWeights,
};
use crate::error::{Result, SktError, StageContext};
use crate::fom::{assemble_fom, integrate_fom, random_perturbed_initial, FomOperators, FomOutcome, FomRun, StateVector};
use crate::grid::SpatialGrid;
use crate::output::{self, emit_fields, emit_tables, TableRow};
use crate::par;
use crate::params::SktParams;
use crate::pid::{density_series, find_transition, run_gpod, run_online, run_ppod, OnlinePlan, ReductionSettings, RomRun};
use crate::rom::ReducedModel;
use crate::snapshots::{SnapshotMatrix, Species};

pub const MANIFEST_FILE: &str = "rom_manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "G-POD")]
    Gpod,
    #[serde(rename = "P-POD")]
    Ppod,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Gpod => "G-POD",
            Method::Ppod => "P-POD",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Method::Gpod => "gpod",
            Method::Ppod => "ppod",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomSummary {
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_time: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub samples: usize,
    /// `max - min` of the final `u1`.
    pub pattern_amplitude: f64,
    /// Density transition over the whole run at the configured PID tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition_time: Option<f64>,
    pub entropy_decreasing: bool,
    pub entropy_max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomSummary {
    pub method: Method,
    pub tol_ric: f64,
    /// `(k1, k2)` per time window.
    pub modes: Vec<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_horizon: Option<f64>,
    /// Time-averaged relative L² errors against the full-order run.
    pub error_u: f64,
    pub error_v: f64,
    pub final_error_u: f64,
    pub final_error_v: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_residual: Option<(f64, f64)>,
    pub entropy_decreasing: bool,
    pub entropy_max_violation: f64,
}

impl RomSummary {
    pub fn table_row(&self) -> TableRow {
        let windowed = self.modes.len() == 2;
        TableRow {
            tol_ric: self.tol_ric,
            method: self.method.label().into(),
            modes: (!windowed).then(|| self.modes[0]),
            modes_i1: windowed.then(|| self.modes[0]),
            modes_i2: windowed.then(|| self.modes[1]),
            error_u: self.error_u,
            error_v: self.error_v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RomTiming {
    pub method: String,
    pub tol_ric: f64,
    pub offline_secs: f64,
    pub online_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub fom_secs: f64,
    pub roms: Vec<RomTiming>,
}

/// Summary of one experiment. Timings are kept apart so that the persisted
/// report is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub dim: usize,
    pub n_states: usize,
    pub dt: f64,
    pub seed: u64,
    pub fom: FomSummary,
    #[serde(default)]
    pub roms: Vec<RomSummary>,
    #[serde(skip)]
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn table_rows(&self) -> Vec<TableRow> {
        self.roms.iter().map(RomSummary::table_row).collect()
    }

    pub fn rom(&self, method: Method, tol_ric: f64) -> Option<&RomSummary> {
        self.roms.iter().find(|r| r.method == method && r.tol_ric == tol_ric)
    }
}

/// Persisted description of an online run, enough to replay it without the
/// full-order model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomManifest {
    pub method: Method,
    pub tol_ric: f64,
    pub models: Vec<String>,
    pub grid: GridSpec,
    pub params: SktParams,
    pub plan: OnlinePlan,
}

/// Initial state described by the configuration.
pub fn initial_state(cfg: &ExperimentConfig, grid: &SpatialGrid) -> Result<StateVector> {
    let pts = grid.points();
    let field = |f: &dyn Fn([f64; 2]) -> f64| DVector::from_iterator(pts.len(), pts.iter().map(|&p| f(p)));
    match cfg.initial.kind {
        InitialKind::Perturbed => random_perturbed_initial(grid, &cfg.params, cfg.initial.amplitude, cfg.initial.seed),
        InitialKind::Entropy1d => StateVector::new(
            field(&|[x, _]| (x.sin() / 2.0).exp()),
            field(&|[x, _]| ((2.0 * x).cos() / 2.0).exp()),
            0.0,
        ),
        InitialKind::Entropy2d => {
            let pi = std::f64::consts::PI;
            StateVector::new(
                field(&|[x, y]| (pi * (x + y)).sin() / 2.0 + 1.0),
                field(&|[x, y]| (pi * (x - y)).cos() / 2.0 + 1.0),
                0.0,
            )
        }
    }
}

fn entropy_weights(params: &SktParams) -> EntropyWeights {
    EntropyWeights::from_params(params).unwrap_or(EntropyWeights { pi1: 1.0, pi2: 1.0 })
}

/// Full-order operators, initial state and trajectory of one experiment.
pub struct FomStage {
    pub grid: SpatialGrid,
    pub ops: FomOperators,
    pub u0: StateVector,
    pub run: FomRun,
    pub elapsed: Duration,
}

impl FomStage {
    /// Number of time steps taken.
    pub fn steps(&self) -> usize {
        self.run.diagnostics.len() - 1
    }

    fn summary(&self, cfg: &ExperimentConfig) -> Result<FomSummary> {
        let fin = self.run.final_state.u1.as_slice();
        let amp = fin.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - fin.iter().copied().fold(f64::INFINITY, f64::min);
        let transition = find_transition(
            &density_series(&self.run.s1, &self.grid)?,
            &density_series(&self.run.s2, &self.grid)?,
            self.run.s1.times(),
            cfg.rom.tol_pid,
        )?;
        let entropy = &self.run.diagnostics.entropy;
        let verdict = check_entropy_decay(entropy, default_decay_slack(entropy));
        Ok(FomSummary {
            outcome: match self.run.outcome {
                FomOutcome::SteadyState { .. } => "steady".into(),
                FomOutcome::HorizonReached => "horizon".into(),
                FomOutcome::Failed { .. } => "failed".into(),
            },
            steady_time: self.run.steady_time(),
            final_time: self.run.final_state.t,
            steps: self.steps(),
            samples: self.run.s1.len(),
            pattern_amplitude: amp,
            transition_time: transition.map(|p| p.t_p),
            entropy_decreasing: verdict.decreasing,
            entropy_max_violation: verdict.max_violation,
        })
    }
}

/// Assemble and integrate the full-order model.
pub fn run_fom_stage(cfg: &ExperimentConfig) -> Result<FomStage> {
    let grid = cfg.grid.build()?;
    let ops = assemble_fom(&grid, &cfg.params).stage("full-order assembly")?;
    let u0 = initial_state(cfg, &grid).stage("initial state")?;
    let start = Instant::now();
    let run = integrate_fom(&ops, &u0, cfg.time.grid()?, cfg.time.stop_rule(), cfg.time.store_every)
        .stage("full-order integration")?;
    let elapsed = start.elapsed();
    if let FomOutcome::Failed { t, reason } = &run.outcome {
        log::error!("full-order run failed at t={t}: {reason}");
    }
    Ok(FomStage {
        grid,
        ops,
        u0,
        run,
        elapsed,
    })
}

/// A reduced run together with its comparison against the full-order run.
pub struct RomStage {
    pub run: RomRun,
    pub summary: RomSummary,
    pub diagnostics: DiagnosticsSeries,
}

/// Build, integrate and evaluate one reduced model.
///
/// Training uses the snapshots up to the configured training horizon; the
/// reduced dynamics always run over the full time span of the full-order run.
pub fn run_rom_stage(cfg: &ExperimentConfig, fom: &FomStage, method: Method, tol_ric: f64) -> Result<RomStage> {
    let (s1, s2) = match cfg.rom.training_horizon {
        Some(h) => (fom.run.s1.up_to(h)?, fom.run.s2.up_to(h)?),
        None => (fom.run.s1.clone(), fom.run.s2.clone()),
    };
    let settings = ReductionSettings {
        ric_tol: tol_ric,
        rsvd: cfg.rom.rsvd(),
        dt: cfg.time.dt,
        steps: fom.steps(),
        store_every: cfg.time.store_every,
    };
    let run = match method {
        Method::Gpod => run_gpod(&fom.ops, &s1, &s2, &fom.u0, &settings),
        Method::Ppod => run_ppod(&fom.ops, &s1, &s2, &fom.u0, &settings, cfg.rom.tol_pid),
    }
    .stage("reduced-order model")?;
    let (r1, r2) = (&run.online.u1, &run.online.u2);
    if !r1.data().iter().chain(r2.data().iter()).all(|v| v.is_finite()) {
        return Err(SktError::Stage {
            stage: "reduced-order integration",
            source: Box::new(SktError::Divergence {
                t: *r1.times().last().unwrap_or(&0.0),
            }),
        });
    }
    let grid = &fom.grid;
    let last = fom.run.s1.len() - 1;
    let diagnostics = DiagnosticsSeries::from_trajectory(r1, r2, entropy_weights(&cfg.params), grid);
    let verdict = check_entropy_decay(&diagnostics.entropy, default_decay_slack(&diagnostics.entropy));
    let summary = RomSummary {
        method,
        tol_ric,
        modes: run.mode_counts(),
        transition_time: run.partition.as_ref().map(|p| p.t_p),
        training_horizon: cfg.rom.training_horizon,
        error_u: relative_l2_error(&fom.run.s1, r1, grid).stage("error evaluation")?,
        error_v: relative_l2_error(&fom.run.s2, r2, grid).stage("error evaluation")?,
        final_error_u: relative_l2_error_at(fom.run.s1.column(last), r1.column(last), grid)?,
        final_error_v: relative_l2_error_at(fom.run.s2.column(last), r2.column(last), grid)?,
        interface_residual: run.online.interface_residual,
        entropy_decreasing: verdict.decreasing,
        entropy_max_violation: verdict.max_violation,
    };
    Ok(RomStage {
        run,
        summary,
        diagnostics,
    })
}

/// What an experiment runs after the full-order model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// Full-order model only.
    Fom,
    /// The configured reduction at the configured tolerance.
    Rom,
    /// Every tolerance of the sweep list, for G-POD and (unless the mode is
    /// `gpod`) P-POD.
    Sweep,
}

fn rom_jobs(cfg: &ExperimentConfig, kind: RunKind) -> Result<Vec<(Method, f64)>> {
    let methods: &[Method] = match cfg.rom.mode {
        RomMode::None => &[],
        RomMode::Gpod => &[Method::Gpod],
        RomMode::Ppod => &[Method::Gpod, Method::Ppod],
    };
    Ok(match kind {
        RunKind::Fom => Vec::new(),
        RunKind::Rom => match cfg.rom.mode {
            RomMode::None => Vec::new(),
            RomMode::Gpod => vec![(Method::Gpod, cfg.rom.tol_ric)],
            RomMode::Ppod => vec![(Method::Ppod, cfg.rom.tol_ric)],
        },
        RunKind::Sweep => {
            if methods.is_empty() {
                return Err(SktError::Config("sweep needs rom.mode gpod or ppod".into()));
            }
            methods
                .iter()
                .flat_map(|&m| cfg.rom.ric_sweep.iter().map(move |&t| (m, t)))
                .collect()
        }
    })
}

/// Run an experiment and, if `out` is given, persist every artifact there.
pub fn run_experiment(cfg: &ExperimentConfig, kind: RunKind, out: Option<&Path>) -> Result<ExperimentReport> {
    let jobs = rom_jobs(cfg, kind)?;
    log::info!("{}: full-order run on {} nodes", cfg.name, cfg.grid.build()?.len());
    let fom = run_fom_stage(cfg)?;
    if let Some(dir) = out {
        write_fom_artifacts(dir, cfg, &fom)?;
    }
    if let FomOutcome::Failed { t, .. } = fom.run.outcome {
        return Err(SktError::Stage {
            stage: "full-order integration",
            source: Box::new(SktError::Divergence { t }),
        });
    }
    log::info!(
        "{}: full-order run finished at t={} ({:.2?})",
        cfg.name,
        fom.run.final_state.t,
        fom.elapsed
    );
    let roms = par::map_jobs(&jobs, |&(method, tol)| {
        let stage = run_rom_stage(cfg, &fom, method, tol)?;
        log::info!(
            "{}: {} tol {tol:e} modes {:?} errors {:.3e} {:.3e}",
            cfg.name,
            method.label(),
            stage.summary.modes,
            stage.summary.error_u,
            stage.summary.error_v
        );
        if let Some(dir) = out {
            write_rom_artifacts(dir, cfg, &fom, &stage)?;
        }
        Ok(stage)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let report = ExperimentReport {
        name: cfg.name.clone(),
        dim: fom.grid.dim(),
        n_states: fom.grid.len(),
        dt: cfg.time.dt,
        seed: cfg.initial.seed,
        fom: fom.summary(cfg)?,
        roms: roms.iter().map(|r| r.summary.clone()).collect(),
        timings: Timings {
            fom_secs: fom.elapsed.as_secs_f64(),
            roms: roms
                .iter()
                .map(|r| RomTiming {
                    method: r.summary.method.label().into(),
                    tol_ric: r.summary.tol_ric,
                    offline_secs: r.run.offline.as_secs_f64(),
                    online_secs: r.run.online.online.as_secs_f64(),
                })
                .collect(),
        },
    };
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    Ok(report)
}

fn write_snapshots(dir: &Path, prefix: &str, s1: &SnapshotMatrix, s2: &SnapshotMatrix, csv: bool) -> Result<()> {
    for (tag, s) in [("u1", s1), ("u2", s2)] {
        s.write_binary(output::create(&dir.join(format!("{prefix}_{tag}.skts")))?)?;
        if csv {
            s.write_csv(output::create(&dir.join(format!("{prefix}_{tag}.csv")))?)?;
        }
    }
    Ok(())
}

fn field_times(cfg: &ExperimentConfig, s: &SnapshotMatrix) -> Vec<f64> {
    let end = *s.times().last().unwrap_or(&0.0);
    let mut times: Vec<f64> = cfg.output.field_times.iter().copied().filter(|&t| t <= end).collect();
    times.push(end);
    times
}

fn write_fom_artifacts(dir: &Path, cfg: &ExperimentConfig, fom: &FomStage) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.cfg"), cfg.to_text()?)?;
    fom.run
        .diagnostics
        .write_csv(output::create(&dir.join("fom_diagnostics.csv"))?)?;
    write_snapshots(dir, "fom", &fom.run.s1, &fom.run.s2, cfg.output.snapshot_csv)?;
    emit_fields(
        &dir.join("fields"),
        "fom",
        &fom.run.s1,
        &fom.run.s2,
        &fom.grid,
        &field_times(cfg, &fom.run.s1),
    )?;
    Ok(())
}

/// Directory name of one reduced run, e.g. `rom_ppod_1e-4`.
pub fn rom_dir_name(method: Method, tol_ric: f64) -> String {
    format!("rom_{}_{tol_ric:e}", method.slug())
}

fn write_rom_artifacts(dir: &Path, cfg: &ExperimentConfig, fom: &FomStage, rom: &RomStage) -> Result<()> {
    let sub = dir.join(rom_dir_name(rom.summary.method, rom.summary.tol_ric));
    std::fs::create_dir_all(&sub)?;
    let mut names = Vec::new();
    for (w, model) in rom.run.models.iter().enumerate() {
        let name = format!("model_{}.sktr", w + 1);
        model.write_binary(output::create(&sub.join(&name))?)?;
        names.push(name);
    }
    let manifest = RomManifest {
        method: rom.summary.method,
        tol_ric: rom.summary.tol_ric,
        models: names,
        grid: cfg.grid.clone(),
        params: cfg.params,
        plan: rom.run.plan.clone(),
    };
    output::write_toml(&sub.join(MANIFEST_FILE), &manifest)?;
    rom.diagnostics.write_csv(output::create(&sub.join("diagnostics.csv"))?)?;
    let (u1, u2) = (&rom.run.online.u1, &rom.run.online.u2);
    write_snapshots(&sub, "lifted", u1, u2, cfg.output.snapshot_csv)?;
    emit_fields(&sub.join("fields"), "rom", u1, u2, &fom.grid, &field_times(cfg, u1))?;
    Ok(())
}

fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    output::write_toml(&dir.join("report.toml"), report)?;
    output::write_toml(&dir.join("timings.toml"), &report.timings)?;
    emit_tables(&report.table_rows(), output::create(&dir.join("tables.csv"))?)?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    output::read_toml(&dir.join("report.toml"))
}

/// Outcome of an online-only replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub method: Method,
    pub tol_ric: f64,
    pub samples: usize,
    pub final_time: f64,
    /// Largest deviation from the lifted trajectory recorded next to the
    /// models, if one is present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(skip)]
    pub online_secs: f64,
}

/// Reload the models of a reduced run and integrate them again without the
/// full-order model. Results go to `out` (defaults to `model_dir/replay`).
pub fn replay(model_dir: &Path, out: Option<&Path>) -> Result<ReplayReport> {
    let manifest: RomManifest = output::read_toml(&model_dir.join(MANIFEST_FILE))
        .map_err(|e| SktError::Config(e.to_string()))?;
    let models = manifest
        .models
        .iter()
        .map(|name| ReducedModel::read_binary(output::open(&model_dir.join(name))?))
        .collect::<Result<Vec<_>>>()
        .stage("model loading")?;
    let online = run_online(&models, &manifest.plan).stage("online replay")?;
    let mut max_deviation = None;
    let recorded = model_dir.join("lifted_u1.skts");
    if recorded.exists() {
        let r1 = SnapshotMatrix::read_binary(output::open(&recorded)?, Species::U1)?;
        let r2 = SnapshotMatrix::read_binary(output::open(&model_dir.join("lifted_u2.skts"))?, Species::U2)?;
        if r1.data().shape() != online.u1.data().shape() || r2.data().shape() != online.u2.data().shape() {
            return Err(SktError::Format("recorded trajectory does not match the manifest".into()));
        }
        let d1 = (r1.data() - online.u1.data()).amax();
        let d2 = (r2.data() - online.u2.data()).amax();
        max_deviation = Some(d1.max(d2));
    }
    let grid = manifest.grid.build()?;
    let dest: PathBuf = out.map_or_else(|| model_dir.join("replay"), Path::to_path_buf);
    std::fs::create_dir_all(&dest)?;
    DiagnosticsSeries::from_trajectory(&online.u1, &online.u2, entropy_weights(&manifest.params), &grid)
        .write_csv(output::create(&dest.join("diagnostics.csv"))?)?;
    write_snapshots(&dest, "lifted", &online.u1, &online.u2, false)?;
    let end = *online.u1.times().last().unwrap_or(&0.0);
    emit_fields(&dest.join("fields"), "replay", &online.u1, &online.u2, &grid, &[end])?;
    let report = ReplayReport {
        method: manifest.method,
        tol_ric: manifest.tol_ric,
        samples: online.u1.len(),
        final_time: end,
        max_deviation,
        online_secs: online.online.as_secs_f64(),
    };
    output::write_toml(&dest.join("replay.toml"), &report)?;
    Ok(report)
}

/// Concatenate the table rows of several persisted reports.
pub fn collect_tables(dirs: &[PathBuf], out: &Path) -> Result<usize> {
    let mut rows = Vec::new();
    for d in dirs {
        rows.extend(read_report(d)?.table_rows());
    }
    emit_tables(&rows, output::create(out)?)?;
    Ok(rows.len())
}
