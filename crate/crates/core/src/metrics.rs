//! Interval evaluation: coverage, half-width, Winkler score and rolling
//! local coverage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::fmt_f64;
use crate::series::PredictionInterval;

/// Default local-coverage window.
pub const LOCAL_WINDOW: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no (outcome, interval) pairs to evaluate")]
    EmptyInput,
    #[error("need at least {window} observations, got {available}")]
    TooFewObservations { window: usize, available: usize },
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
}

/// `(u - l) + (2/alpha) * [(l - y)+ + (y - u)+]`.
pub fn winkler(y: f64, interval: &PredictionInterval, alpha: f64) -> f64 {
    let (l, u) = (interval.lower, interval.upper);
    (u - l) + (2.0 / alpha) * ((l - y).max(0.0) + (y - u).max(0.0))
}

/// Fraction of outcomes inside their (closed) interval.
pub fn coverage(pairs: &[(f64, PredictionInterval)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = pairs.iter().filter(|(y, iv)| iv.contains(*y)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Sliding-window (stride 1) hit rates and their population standard
/// deviation.
pub fn local_coverage(hits: &[bool], window: usize) -> Result<(Vec<f64>, f64), MetricsError> {
    if window == 0 || hits.len() < window {
        return Err(MetricsError::TooFewObservations {
            window,
            available: hits.len(),
        });
    }
    let mut count = hits[..window].iter().filter(|&&h| h).count();
    let mut means = Vec::with_capacity(hits.len() - window + 1);
    means.push(count as f64 / window as f64);
    for i in window..hits.len() {
        count += hits[i] as usize;
        count -= hits[i - window] as usize;
        means.push(count as f64 / window as f64);
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    Ok((means, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: f64,
    pub mean_halfwidth: f64,
    pub mean_winkler: f64,
    pub n: usize,
    /// Std of the local-coverage means; `None` when fewer than `window`
    /// pairs were evaluated.
    pub local_cov_std: Option<f64>,
}

pub const EVAL_HEADER: &str = "scheme,m,h,alpha,coverage,mean_halfwidth,mean_winkler,n,local_cov_std";

impl EvalReport {
    /// One CSV row matching [`EVAL_HEADER`]; `m` is empty for the full
    /// scheme, `h` when unknown.
    pub fn csv_row(&self, scheme: &str, m: Option<usize>, h: Option<usize>, alpha: f64) -> String {
        format!(
            "{scheme},{},{},{},{},{},{},{},{}",
            m.map(|m| m.to_string()).unwrap_or_default(),
            h.map(|h| h.to_string()).unwrap_or_default(),
            fmt_f64(alpha),
            fmt_f64(self.coverage),
            fmt_f64(self.mean_halfwidth),
            fmt_f64(self.mean_winkler),
            self.n,
            self.local_cov_std.map(fmt_f64).unwrap_or_default(),
        )
    }
}

pub fn evaluate(pairs: &[(f64, PredictionInterval)], alpha: f64, window: usize) -> Result<EvalReport, MetricsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::InvalidAlpha(alpha));
    }
    let cov = coverage(pairs)?;
    let n = pairs.len();
    let mean_halfwidth = pairs.iter().map(|(_, iv)| iv.half_width()).sum::<f64>() / n as f64;
    let mean_winkler = pairs.iter().map(|(y, iv)| winkler(*y, iv, alpha)).sum::<f64>() / n as f64;
    let hits: Vec<bool> = pairs.iter().map(|(y, iv)| iv.contains(*y)).collect();
    let local_cov_std = local_coverage(&hits, window).ok().map(|(_, s)| s);
    Ok(EvalReport {
        coverage: cov,
        mean_halfwidth,
        mean_winkler,
        n,
        local_cov_std,
    })
}
