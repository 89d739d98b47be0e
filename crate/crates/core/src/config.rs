//! Experiment configuration files.
//!
//! Plain `key = value` text with `[section]` headers (TOML syntax). Unknown
//! keys are rejected so that typos surface as configuration errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};
use crate::fom::{SteadyStateRule, TimeGrid};
use crate::grid::{Axis, SpatialGrid};
use crate::params::SktParams;
use crate::rsvd::RsvdOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// `[lo, hi]` along x.
    pub x: [f64; 2],
    pub n_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_y: Option<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<SpatialGrid> {
        let x = Axis::new(self.x[0], self.x[1], self.n_x)?;
        match (self.dim, self.y, self.n_y) {
            (1, None, None) => SpatialGrid::new_1d(x),
            (2, Some(y), Some(n_y)) => SpatialGrid::new_2d(x, Axis::new(y[0], y[1], n_y)?),
            (1, _, _) => Err(SktError::Config("1D grid must not set y or n_y".into())),
            (2, _, _) => Err(SktError::Config("2D grid needs both y and n_y".into())),
            (d, _, _) => Err(SktError::Config(format!("grid dim must be 1 or 2, got {d}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    /// Horizon; integration may stop earlier at steady state.
    pub t_max: f64,
    #[serde(default = "default_tol_st")]
    pub tol_st: f64,
    #[serde(default = "default_true")]
    pub stop_at_steady: bool,
    #[serde(default = "default_one")]
    pub store_every: usize,
}

impl TimeSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt, self.t_max)
    }

    pub fn stop_rule(&self) -> Option<SteadyStateRule> {
        self.stop_at_steady.then_some(SteadyStateRule { tol: self.tol_st })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// Equilibrium with multiplicative uniform noise.
    Perturbed,
    /// `u1 = exp(sin(x)/2)`, `u2 = exp(cos(2x)/2)`.
    Entropy1d,
    /// `u1 = sin(π(x+y))/2 + 1`, `u2 = cos(π(x-y))/2 + 1`.
    Entropy2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RomMode {
    None,
    Gpod,
    Ppod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomSpec {
    #[serde(default = "default_mode")]
    pub mode: RomMode,
    #[serde(default = "default_tol_ric")]
    pub tol_ric: f64,
    #[serde(default = "default_tol_pid")]
    pub tol_pid: f64,
    /// RIC tolerances visited by `sweep`.
    #[serde(default = "default_sweep")]
    pub ric_sweep: Vec<f64>,
    /// Train on snapshots up to this time only, then keep integrating the
    /// reduced model to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_horizon: Option<f64>,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
    #[serde(default)]
    pub rsvd_seed: u64,
}

impl Default for RomSpec {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            tol_ric: default_tol_ric(),
            tol_pid: default_tol_pid(),
            ric_sweep: default_sweep(),
            training_horizon: None,
            oversample: default_oversample(),
            power_iters: default_power_iters(),
            rsvd_seed: 0,
        }
    }
}

impl RomSpec {
    pub fn rsvd(&self) -> RsvdOptions {
        RsvdOptions {
            oversample: self.oversample,
            power_iters: self.power_iters,
            seed: self.rsvd_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Times at which full fields are dumped; the final state is always dumped.
    #[serde(default)]
    pub field_times: Vec<f64>,
    /// Also write every snapshot as CSV (the binary form is always written).
    #[serde(default)]
    pub snapshot_csv: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            field_times: Vec::new(),
            snapshot_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub grid: GridSpec,
    pub params: SktParams,
    pub time: TimeSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub rom: RomSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_tol_st() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}
fn default_amplitude() -> f64 {
    0.01
}
fn default_mode() -> RomMode {
    RomMode::Ppod
}
fn default_tol_ric() -> f64 {
    1e-4
}
fn default_tol_pid() -> f64 {
    1e-8
}
fn default_sweep() -> Vec<f64> {
    vec![1e-3, 1e-4, 1e-5, 1e-6]
}
fn default_oversample() -> usize {
    10
}
fn default_power_iters() -> usize {
    2
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SktError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(SktError::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SktError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate; an empty `name` is replaced by the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SktError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_str(&text)
            .map_err(|e| SktError::Config(format!("{}: {e}", path.display())))?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SktError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build().map_err(|e| SktError::Config(e.to_string()))?;
        self.params
            .validate()
            .map_err(|e| SktError::Config(e.to_string()))?;
        positive("time.dt", self.time.dt)?;
        positive("time.t_max", self.time.t_max)?;
        positive("time.tol_st", self.time.tol_st)?;
        self.time.grid().map_err(|e| SktError::Config(e.to_string()))?;
        if self.time.store_every == 0 {
            return Err(SktError::Config("time.store_every must be >= 1".into()));
        }
        if !(self.initial.amplitude >= 0.0 && self.initial.amplitude.is_finite()) {
            return Err(SktError::Config(format!(
                "initial.amplitude must be non-negative, got {}",
                self.initial.amplitude
            )));
        }
        match (self.initial.kind, self.grid.dim) {
            (InitialKind::Entropy1d, 2) | (InitialKind::Entropy2d, 1) => {
                return Err(SktError::Config(format!(
                    "initial kind {:?} does not match a {}D grid",
                    self.initial.kind, self.grid.dim
                )))
            }
            (InitialKind::Perturbed, _) => {
                self.params
                    .equilibrium()
                    .map_err(|e| SktError::Config(e.to_string()))?;
            }
            _ => {}
        }
        unit_interval("rom.tol_ric", self.rom.tol_ric)?;
        positive("rom.tol_pid", self.rom.tol_pid)?;
        for &t in &self.rom.ric_sweep {
            unit_interval("rom.ric_sweep entry", t)?;
        }
        if let Some(h) = self.rom.training_horizon {
            positive("rom.training_horizon", h)?;
            if h > self.time.t_max {
                return Err(SktError::Config(format!(
                    "rom.training_horizon {h} exceeds time.t_max {}",
                    self.time.t_max
                )));
            }
        }
        for &t in &self.output.field_times {
            if !(t >= 0.0 && t <= self.time.t_max) {
                return Err(SktError::Config(format!(
                    "output.field_times entry {t} outside [0, {}]",
                    self.time.t_max
                )));
            }
        }
        Ok(())
    }
}
