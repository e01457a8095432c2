//! The window-scaling experiment: for every `T` and replicate, simulate,
//! score, select `m̂` and record it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::{generate, ProcessKind, ProcessSpec};
use super::{LabError, ScalingRow};
use crate::models::ModelSpec;
use crate::rng::derive_seed;
use crate::rolling::{rolling_scores, RollingConfig};
use crate::selection::{make_grid, select_window, Boundary, DEFAULT_GRID_HI, DEFAULT_GRID_LO, DEFAULT_GRID_POINTS};
use crate::series::SplitSpec;

/// How a group's series are produced at each `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    /// The same process at every `T`.
    Process { spec: ProcessKind },
    /// Full-length drift with amplitude tied to `T`
    /// (see [`ProcessKind::calibrated_drift`]).
    CalibratedDrift {
        strength: f64,
        #[serde(default = "one_f")]
        beta: f64,
        #[serde(default = "one_f")]
        base_sigma: f64,
    },
    /// No simulation: `m* = round(c · T^exponent)`, coverage `1 − α`,
    /// Winkler 0. Checks the regression plumbing end to end.
    Planted { c: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub freq: String,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "grid_points")]
    pub n_points: usize,
    #[serde(default = "grid_lo")]
    pub lo: f64,
    #[serde(default = "grid_hi")]
    pub hi: f64,
    #[serde(default = "one_f")]
    pub beta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_GRID_POINTS,
            lo: DEFAULT_GRID_LO,
            hi: DEFAULT_GRID_HI,
            beta: 1.0,
        }
    }
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn grid_lo() -> f64 {
    DEFAULT_GRID_LO
}
fn grid_hi() -> f64 {
    DEFAULT_GRID_HI
}
fn default_alpha() -> f64 {
    0.1
}
fn default_model() -> ModelSpec {
    ModelSpec::mean()
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub t_grid: Vec<usize>,
    #[serde(default = "one")]
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub h: usize,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    pub groups: Vec<Group>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "one")]
    pub refit_stride: usize,
    /// First rolling origin; the model's default when absent.
    #[serde(default)]
    pub min_train: Option<usize>,
    /// Select on volatility-scaled scores.
    #[serde(default)]
    pub scaled: bool,
    #[serde(default)]
    pub fixed_effects: bool,
    #[serde(default = "yes")]
    pub exclude_boundary: bool,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, LabError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if self.t_grid.is_empty() {
            return bad("t_grid is empty");
        }
        if !self.t_grid.windows(2).all(|w| w[0] < w[1]) {
            return bad("t_grid must be strictly increasing");
        }
        if self.n_reps == 0 {
            return bad("n_reps must be positive");
        }
        if self.groups.is_empty() {
            return bad("no groups");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.h == 0 || self.refit_stride == 0 {
            return bad("h and refit_stride must be positive");
        }
        SplitSpec::new(self.split.calibration_fraction, self.split.validation_fraction)
            .map_err(|e| LabError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| LabError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub series_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    /// Sorted by (group, T, replicate).
    pub rows: Vec<ScalingRow>,
    pub dropped: Vec<DroppedRow>,
}

pub fn series_id(freq: &str, t: usize, rep: usize) -> String {
    format!("{freq}-T{t}-r{rep}")
}

/// One replicate. The series seed is `derive_seed(root, [group, T, rep])`;
/// the model seed derives from it.
pub fn run_replicate(cfg: &ExperimentConfig, group: usize, t: usize, rep: usize) -> Result<ScalingRow, String> {
    let g = &cfg.groups[group];
    let seed = derive_seed(cfg.seed, &[group as u64, t as u64, rep as u64]);
    let id = series_id(&g.freq, t, rep);
    let kind = match g.family {
        Family::Planted { c, exponent } => {
            return Ok(ScalingRow {
                series_id: id,
                freq: g.freq.clone(),
                t,
                m_star: ((c * (t as f64).powf(exponent)).round() as usize).max(1),
                at_boundary: false,
                coverage: 1.0 - cfg.alpha,
                mean_winkler: 0.0,
            });
        }
        Family::Process { spec } => spec,
        Family::CalibratedDrift {
            strength,
            beta,
            base_sigma,
        } => ProcessKind::calibrated_drift(t, beta, strength, base_sigma),
    };
    let series = generate(&ProcessSpec { kind, t, seed }).map_err(|e| e.to_string())?;
    let scaled = cfg.scaled && cfg.model.provides_volatility();
    let rcfg = RollingConfig {
        horizon: cfg.h,
        min_train: cfg.min_train.unwrap_or_else(|| cfg.model.default_min_train()),
        refit_stride: cfg.refit_stride,
        scale_scores: scaled,
    };
    let run = rolling_scores(&series, &cfg.model, &rcfg, derive_seed(seed, &[1])).map_err(|e| e.to_string())?;
    let grid = make_grid(t, cfg.grid.beta, cfg.grid.n_points, cfg.grid.lo, cfg.grid.hi).map_err(|e| e.to_string())?;
    let sel = select_window(&run.scores, &grid, cfg.alpha, cfg.split, scaled).map_err(|e| e.to_string())?;
    let best = sel.best();
    Ok(ScalingRow {
        series_id: id,
        freq: g.freq.clone(),
        t,
        m_star: sel.m_hat,
        at_boundary: sel.at_boundary != Boundary::No,
        coverage: best.coverage.unwrap_or(f64::NAN),
        mean_winkler: best.mean_winkler.unwrap_or(f64::NAN),
    })
}

/// Runs every (group, T, replicate) in parallel on the current rayon pool.
/// Failed replicates are dropped with a logged reason; the run fails only
/// when nothing succeeds.
pub fn run_scaling_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, LabError> {
    cfg.validate()?;
    if cfg.scaled && !cfg.model.provides_volatility() {
        log::warn!("model has no volatility forecast; selecting on unscaled scores");
    }
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.groups.len())
        .flat_map(|g| {
            cfg.t_grid
                .iter()
                .flat_map(move |&t| (0..cfg.n_reps).map(move |r| (g, t, r)))
        })
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(g, t, r)| ((g, t, r), run_replicate(cfg, g, t, r)))
        .collect();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for ((g, t, r), res) in results {
        match res {
            Ok(row) => rows.push(row),
            Err(reason) => {
                let id = series_id(&cfg.groups[g].freq, t, r);
                log::warn!("{id}: dropped: {reason}");
                dropped.push(DroppedRow { series_id: id, reason });
            }
        }
    }
    if rows.is_empty() {
        return Err(LabError::AllRowsDropped(
            dropped
                .first()
                .map(|d| format!("{}: {}", d.series_id, d.reason))
                .unwrap_or_default(),
        ));
    }
    Ok(ExperimentOutput { rows, dropped })
}
