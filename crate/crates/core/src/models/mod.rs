//! Point and volatility forecasters that plug into the rolling engine.

mod ar;
mod garch;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ar::{fit_ar, forecast_ar, ArAccumulator, FittedAR};
pub use garch::{
    fit_arma_garch, fit_arma_garch_with, forecast_volatility, ArmaParams, FittedArmaGarch, GarchFitOptions,
    GarchParams, GarchState, VARIANCE_CEILING,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("series too short: needed {needed}, available {available}")]
    SeriesTooShort { needed: usize, available: usize },
    #[error("history too short: needed {needed}, available {available}")]
    HistoryTooShort { needed: usize, available: usize },
    #[error("singular design (collinear lags or constant series)")]
    SingularDesign,
    #[error("optimizer diverged: non-finite likelihood at every restart")]
    OptimizerDiverged,
    #[error("numeric overflow in the {0}-step variance forecast")]
    NumericOverflow(usize),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Last observed value.
    Naive,
    /// Sample mean of the fitting prefix.
    Mean,
    /// AR(p) with `p <= max_lag` chosen by BIC.
    Ar { max_lag: usize },
    /// ARMA(1,1) mean with GARCH(1,1) conditional variance.
    ArmaGarch,
}

/// Declarative forecaster choice, as it appears in run configs:
/// `{"kind": "ar", "max_lag": 12}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, f64>,
}

pub const DEFAULT_MAX_LAG: usize = 12;

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            options: BTreeMap::new(),
        }
    }

    pub fn naive() -> Self {
        Self::new(ModelKind::Naive)
    }

    pub fn mean() -> Self {
        Self::new(ModelKind::Mean)
    }

    pub fn ar(max_lag: usize) -> Self {
        Self::new(ModelKind::Ar { max_lag })
    }

    pub fn arma_garch() -> Self {
        Self::new(ModelKind::ArmaGarch)
    }

    pub fn with_option(mut self, key: &str, value: f64) -> Self {
        self.options.insert(key.to_string(), value);
        self
    }

    /// Parses the CLI shorthand `naive`, `mean`, `ar`, `ar:8`, `arma_garch`.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "naive" => Ok(Self::naive()),
            "mean" => Ok(Self::mean()),
            "ar" => Ok(Self::ar(DEFAULT_MAX_LAG)),
            "arma_garch" | "arma-garch" | "garch" => Ok(Self::arma_garch()),
            other => match other.strip_prefix("ar:") {
                Some(lag) => lag
                    .parse::<usize>()
                    .ok()
                    .filter(|&l| l >= 1)
                    .map(Self::ar)
                    .ok_or_else(|| ModelError::InvalidSpec(format!("bad AR lag in {other:?}"))),
                None => Err(ModelError::InvalidSpec(format!("unknown model {other:?}"))),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let ModelKind::Ar { max_lag: 0 } = self.kind {
            return Err(ModelError::InvalidSpec("max_lag must be at least 1".into()));
        }
        Ok(())
    }

    pub fn provides_volatility(&self) -> bool {
        matches!(self.kind, ModelKind::ArmaGarch)
    }

    /// Default first origin for rolling evaluation.
    pub fn default_min_train(&self) -> usize {
        match self.kind {
            ModelKind::Naive | ModelKind::Mean => 30,
            ModelKind::Ar { max_lag } => 30.max(2 * max_lag + 2),
            ModelKind::ArmaGarch => 100,
        }
    }

    /// Smallest prefix the model can be fitted on.
    pub fn min_fit_len(&self) -> usize {
        match self.kind {
            ModelKind::Naive | ModelKind::Mean => 1,
            ModelKind::Ar { max_lag } => max_lag + 2,
            ModelKind::ArmaGarch => garch::MIN_FIT_LEN,
        }
    }

    fn garch_options(&self) -> GarchFitOptions {
        let mut o = GarchFitOptions::default();
        if let Some(&r) = self.options.get("restarts") {
            o.restarts = (r.max(1.0)) as usize;
        }
        if let Some(&it) = self.options.get("max_iters") {
            o.max_iters = (it.max(10.0)) as u64;
        }
        o
    }

    /// A stateful fitter for a sequence of growing prefixes.
    pub fn fitter(&self, seed: u64) -> PrefixFitter {
        let acc = match self.kind {
            ModelKind::Ar { max_lag } => Some(ArAccumulator::new(max_lag)),
            _ => None,
        };
        PrefixFitter {
            spec: self.clone(),
            seed,
            acc,
        }
    }

    /// One-shot fit on `history`.
    pub fn fit(&self, history: &[f64], seed: u64) -> Result<FittedModel, ModelError> {
        self.fitter(seed).fit(history)
    }
}

/// Fits a model on successive prefixes of one series. For AR models the
/// design cross-products carry over between calls, so growing prefixes cost
/// only the new rows.
#[derive(Debug, Clone)]
pub struct PrefixFitter {
    spec: ModelSpec,
    seed: u64,
    acc: Option<ArAccumulator>,
}

impl PrefixFitter {
    /// Fits on `prefix`. Successive calls must pass prefixes of the same
    /// series; a shorter prefix resets the cached state.
    pub fn fit(&mut self, prefix: &[f64]) -> Result<FittedModel, ModelError> {
        self.spec.validate()?;
        if prefix.is_empty() {
            return Err(ModelError::SeriesTooShort {
                needed: 1,
                available: 0,
            });
        }
        match self.spec.kind {
            ModelKind::Naive => Ok(FittedModel::Naive),
            ModelKind::Mean => Ok(FittedModel::Mean(prefix.iter().sum::<f64>() / prefix.len() as f64)),
            ModelKind::Ar { max_lag } => {
                if prefix.len() < max_lag + 2 {
                    return Err(ModelError::SeriesTooShort {
                        needed: max_lag + 2,
                        available: prefix.len(),
                    });
                }
                let acc = self.acc.get_or_insert_with(|| ArAccumulator::new(max_lag));
                if acc.consumed() > prefix.len() {
                    *acc = ArAccumulator::new(max_lag);
                }
                acc.extend(prefix);
                acc.fit().map(FittedModel::Ar)
            }
            ModelKind::ArmaGarch => {
                let opts = self.spec.garch_options();
                fit_arma_garch_with(prefix, &opts, self.seed).map(FittedModel::ArmaGarch)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Naive,
    Mean(f64),
    Ar(FittedAR),
    ArmaGarch(FittedArmaGarch),
}

/// Point forecast with an optional volatility forecast for the same horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub center: f64,
    pub sigma: Option<f64>,
}

impl FittedModel {
    /// Forecasts `h` steps past the end of `history`, which may extend the
    /// prefix the model was fitted on.
    pub fn forecast(&self, history: &[f64], h: usize) -> Result<Forecast, ModelError> {
        if h == 0 {
            return Err(ModelError::InvalidSpec("horizon must be positive".into()));
        }
        match self {
            FittedModel::Naive => {
                history
                    .last()
                    .map(|&v| Forecast { center: v, sigma: None })
                    .ok_or(ModelError::HistoryTooShort {
                        needed: 1,
                        available: 0,
                    })
            }
            FittedModel::Mean(mu) => Ok(Forecast {
                center: *mu,
                sigma: None,
            }),
            FittedModel::Ar(m) => Ok(Forecast {
                center: forecast_ar(m, history, h)?,
                sigma: None,
            }),
            FittedModel::ArmaGarch(m) => {
                let updated = m.refilter(history)?;
                Ok(Forecast {
                    center: updated.forecast_mean(h),
                    sigma: Some(forecast_volatility(&updated, h)?),
                })
            }
        }
    }
}
