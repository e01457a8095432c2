//! Synthetic experiments: process generators, the window-scaling runner and
//! its log-log regression.

pub mod experiment;
pub mod process;
pub mod regression;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use experiment::{run_scaling_experiment, ExperimentConfig, ExperimentOutput, Family, Group};
pub use process::{generate, ProcessKind, ProcessSpec, SigmaPath};
pub use regression::{ols_hc1, scaling_regression, OlsFit, RegressionError, RegressionResult};

use crate::io::fmt_f64;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("every replicate failed; first: {0}")]
    AllRowsDropped(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("config: {0}")]
    Config(String),
}

/// One selected window from one synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub series_id: String,
    pub freq: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub m_star: usize,
    #[serde(rename = "boundary")]
    pub at_boundary: bool,
    pub coverage: f64,
    #[serde(rename = "winkler")]
    pub mean_winkler: f64,
}

pub const SCALING_HEADER: &str = "series_id,freq,T,m_star,boundary,coverage,winkler";

pub fn scaling_rows_csv(rows: &[ScalingRow]) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.series_id,
            r.freq,
            r.t,
            r.m_star,
            r.at_boundary,
            fmt_f64(r.coverage),
            fmt_f64(r.mean_winkler)
        ));
    }
    out
}

pub fn read_scaling_rows<R: std::io::Read>(r: R) -> Result<Vec<ScalingRow>, LabError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<Vec<ScalingRow>, _>>()
        .map_err(|e| LabError::Config(e.to_string()))
}

/// Scatter data for a log-log plot: `series_id,freq,log_T,log_m_star,boundary`.
pub fn scatter_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("series_id,freq,log_T,log_m_star,boundary\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.series_id,
            r.freq,
            fmt_f64((r.t as f64).ln()),
            fmt_f64((r.m_star as f64).ln()),
            r.at_boundary
        ));
    }
    out
}

/// Fitted lines and the rate reference `ln m = (2/3) ln T` evaluated at the
/// smallest and largest `T`: `line,log_T,log_m`.
pub fn fit_lines_csv(rows: &[ScalingRow], fit: &RegressionResult) -> String {
    let mut out = String::from("line,log_T,log_m\n");
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        let l = (r.t as f64).ln();
        (a.min(l), b.max(l))
    });
    if !lo.is_finite() {
        return out;
    }
    for g in &fit.intercepts {
        for x in [lo, hi] {
            out.push_str(&format!(
                "fit:{},{},{}\n",
                g.freq,
                fmt_f64(x),
                fmt_f64(g.intercept + fit.slope * x)
            ));
        }
    }
    for x in [lo, hi] {
        out.push_str(&format!("rate:2/3,{},{}\n", fmt_f64(x), fmt_f64(2.0 / 3.0 * x)));
    }
    out
}
