//! OLS with HC1 heteroskedasticity-robust standard errors, and the log-log
//! window scaling regression.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScalingRow;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Relative singular-value cutoff for the rank check.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need more rows than columns: {rows} rows, {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("need at least {needed} usable rows, got {available}")]
    TooFewUsableRows { needed: usize, available: usize },
    #[error("fixed effects need at least 2 groups with 2+ rows, got {0}")]
    TooFewGroups(usize),
    #[error("design has {x} rows but the response has {y}")]
    LengthMismatch { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    /// HC1 covariance of the coefficients.
    pub cov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Centred R².
    pub r2: f64,
    pub n: usize,
    pub k: usize,
}

/// Least squares with the HC1 sandwich
/// `(X'X)^{-1} X' diag(e²) X (X'X)^{-1} · n/(n−k)`.
pub fn ols_hc1(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, RegressionError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(RegressionError::LengthMismatch { x: n, y: y.len() });
    }
    if n <= k {
        return Err(RegressionError::TooFewRows { rows: n, cols: k });
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.iter().any(|&s| s <= RANK_TOL * smax) {
        return Err(RegressionError::RankDeficient);
    }
    let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let inv_s = svd.singular_values.map(|s| 1.0 / s);
    // β = V Σ⁻¹ U'y ; (X'X)⁻¹ = V Σ⁻² V'
    let coefficients =
        v_t.transpose() * DVector::from_iterator(k, (u.transpose() * y).iter().zip(inv_s.iter()).map(|(a, b)| a * b));
    let v_scaled = v_t.transpose() * DMatrix::from_diagonal(&inv_s.map(|s| s * s));
    let xtx_inv = &v_scaled * v_t;
    let residuals = y - x * &coefficients;
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * residuals[i].powi(2);
    }
    let cov = &xtx_inv * meat * &xtx_inv * (n as f64 / (n - k) as f64);
    let se = DVector::from_iterator(k, (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()));
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr = residuals.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(OlsFit {
        coefficients,
        cov,
        se,
        residuals,
        r2,
        n,
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub freq: String,
    pub intercept: f64,
    /// `exp(intercept)`: the constant `C` in `m* ≈ C · T^slope`.
    pub constant: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub slope_se_hc1: f64,
    pub ci95: (f64, f64),
    /// One entry (`freq = "pooled"`) without fixed effects, otherwise one
    /// per retained group in name order.
    pub intercepts: Vec<GroupEffect>,
    pub r2: f64,
    pub n: usize,
    pub fixed_effects: bool,
    pub excluded_boundary: usize,
}

/// OLS of `ln m*` on `ln T`, optionally with per-frequency intercepts.
pub fn scaling_regression(
    rows: &[ScalingRow],
    fixed_effects: bool,
    exclude_boundary: bool,
) -> Result<RegressionResult, RegressionError> {
    let usable: Vec<&ScalingRow> = rows.iter().filter(|r| !(exclude_boundary && r.at_boundary)).collect();
    let excluded_boundary = rows.len() - usable.len();
    if usable.len() < 3 {
        return Err(RegressionError::TooFewUsableRows {
            needed: 3,
            available: usable.len(),
        });
    }
    let groups: Vec<(String, usize)> = if fixed_effects {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &usable {
            *counts.entry(r.freq.as_str()).or_default() += 1;
        }
        let kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .map(|(g, c)| (g.to_string(), c))
            .collect();
        if kept.len() < 2 {
            return Err(RegressionError::TooFewGroups(kept.len()));
        }
        kept
    } else {
        vec![("pooled".to_string(), usable.len())]
    };
    let used: Vec<&ScalingRow> = if fixed_effects {
        usable
            .into_iter()
            .filter(|r| groups.iter().any(|(g, _)| *g == r.freq))
            .collect()
    } else {
        usable
    };
    let n = used.len();
    let k = 1 + groups.len();
    let mut x = DMatrix::<f64>::zeros(n, k);
    let mut y = DVector::<f64>::zeros(n);
    for (i, r) in used.iter().enumerate() {
        x[(i, 0)] = (r.t as f64).ln();
        let g = if fixed_effects {
            groups.iter().position(|(g, _)| *g == r.freq).unwrap()
        } else {
            0
        };
        x[(i, 1 + g)] = 1.0;
        y[i] = (r.m_star as f64).ln();
    }
    let fit = ols_hc1(&x, &y)?;
    let slope = fit.coefficients[0];
    let se = fit.se[0];
    Ok(RegressionResult {
        slope,
        slope_se_hc1: se,
        ci95: (slope - Z95 * se, slope + Z95 * se),
        intercepts: groups
            .into_iter()
            .enumerate()
            .map(|(j, (freq, n))| {
                let a = fit.coefficients[1 + j];
                GroupEffect {
                    freq,
                    intercept: a,
                    constant: a.exp(),
                    n,
                }
            })
            .collect(),
        r2: fit.r2,
        n,
        fixed_effects,
        excluded_boundary,
    })
}
