//! Rolling-origin evaluation: one pseudo-out-of-sample score per origin.
//!
//! At each origin `t` (1-based) the model sees only `Y_1, ..., Y_t`; the
//! score is `|Y_{t+h} - Yhat_{t+h|t}|`. Refits happen every `refit_stride`
//! origins; in between, the last fitted model is reused on the longer
//! history.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, ModelSpec};
use crate::rng::derive_seed;
use crate::series::{ScoreRecord, TimeSeries};

/// A run fails when more than this fraction of origins fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RollingError {
    #[error("series too short: needed {needed}, available {available}")]
    SeriesTooShort { needed: usize, available: usize },
    #[error("invalid rolling config: {0}")]
    InvalidConfig(String),
    #[error("fit failed at origin {origin}: {source}")]
    Fit { origin: usize, source: ModelError },
    #[error("{failed} of {total} origins failed")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: Box<RollingError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub horizon: usize,
    /// First origin; the smallest prefix the model is fitted on.
    pub min_train: usize,
    pub refit_stride: usize,
    /// Attach volatility forecasts to the scores when the model has them.
    pub scale_scores: bool,
}

impl RollingConfig {
    /// Refit at every origin, with the model's default first origin.
    pub fn for_model(spec: &ModelSpec, horizon: usize) -> Self {
        Self {
            horizon,
            min_train: spec.default_min_train(),
            refit_stride: 1,
            scale_scores: spec.provides_volatility(),
        }
    }

    pub fn validate(&self) -> Result<(), RollingError> {
        if self.horizon == 0 {
            return Err(RollingError::InvalidConfig("horizon must be positive".into()));
        }
        if self.min_train < 1 {
            return Err(RollingError::InvalidConfig("min_train must be at least 1".into()));
        }
        if self.refit_stride == 0 {
            return Err(RollingError::InvalidConfig("refit_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scores plus bookkeeping about origins that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingRun {
    pub scores: Vec<ScoreRecord>,
    pub failed_origins: Vec<usize>,
    pub config: RollingConfig,
}

/// Evaluates `spec` at origins `min_train, ..., T - h`.
pub fn rolling_scores(
    series: &TimeSeries,
    spec: &ModelSpec,
    cfg: &RollingConfig,
    seed: u64,
) -> Result<RollingRun, RollingError> {
    cfg.validate()?;
    spec.validate()
        .map_err(|source| RollingError::Fit { origin: 0, source })?;
    let y = series.values();
    let n = y.len();
    let h = cfg.horizon;
    if n < cfg.min_train + h {
        return Err(RollingError::SeriesTooShort {
            needed: cfg.min_train + h,
            available: n,
        });
    }
    let attach_sigma = cfg.scale_scores && spec.provides_volatility();
    if cfg.scale_scores && !spec.provides_volatility() {
        log::warn!("model has no volatility forecast; scores carry no sigma");
    }

    let last_origin = n - h;
    let total = last_origin - cfg.min_train + 1;
    let mut fitter = spec.fitter(seed);
    let mut model = None;
    let mut scores = Vec::with_capacity(total);
    let mut failures: Vec<RollingError> = Vec::new();
    let mut failed_origins = Vec::new();

    for t in cfg.min_train..=last_origin {
        let prefix = &y[..t];
        let outcome = (|| {
            if (t - cfg.min_train).is_multiple_of(cfg.refit_stride) {
                let fitted = match spec.kind {
                    crate::models::ModelKind::ArmaGarch => spec.fit(prefix, derive_seed(seed, &[t as u64])),
                    _ => fitter.fit(prefix),
                };
                match fitted {
                    Ok(m) => model = Some(m),
                    Err(e) => return Err(e),
                }
            }
            let m = model.as_ref().ok_or(ModelError::SeriesTooShort {
                needed: spec.min_fit_len(),
                available: t,
            })?;
            m.forecast(prefix, h)
        })();
        match outcome {
            Ok(fc) => {
                let score = (y[t + h - 1] - fc.center).abs();
                let sigma = if attach_sigma { fc.sigma } else { None };
                if !score.is_finite() || sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
                    failed_origins.push(t);
                    failures.push(RollingError::Fit {
                        origin: t,
                        source: ModelError::NumericOverflow(h),
                    });
                    continue;
                }
                scores.push(ScoreRecord::new(t, h, score, sigma));
            }
            Err(source) => {
                log::warn!("origin {t}: {source}; dropping");
                failed_origins.push(t);
                failures.push(RollingError::Fit { origin: t, source });
            }
        }
    }

    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 || scores.is_empty() {
        return Err(RollingError::TooManyFailures {
            failed: failures.len(),
            total,
            first: Box::new(failures.swap_remove(0)),
        });
    }
    Ok(RollingRun {
        scores,
        failed_origins,
        config: *cfg,
    })
}
