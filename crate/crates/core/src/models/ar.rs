//! AR(p) by conditional least squares with BIC order selection.
//!
//! All candidate orders `0..=max_lag` are fitted on the same target rows
//! (`t = max_lag+1, ..., n`), so their BIC values are comparable. The design
//! cross-products are accumulated row by row, which lets a rolling run grow
//! the prefix one observation at a time without refitting from scratch.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedAR {
    pub order: usize,
    pub intercept: f64,
    /// `coefficients[j]` multiplies `Y_{t-1-j}`.
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub bic: f64,
}

impl FittedAR {
    /// Iterated plug-in forecast `h` steps past the end of `history`.
    pub fn forecast(&self, history: &[f64], h: usize) -> Result<f64, ModelError> {
        forecast_ar(self, history, h)
    }
}

/// Cross-product accumulator over the augmented design
/// `z_t = [1, Y_{t-1}, ..., Y_{t-P}, Y_t]`.
#[derive(Debug, Clone)]
pub struct ArAccumulator {
    max_lag: usize,
    /// Packed `(P+2) x (P+2)` symmetric matrix.
    cross: Vec<f64>,
    rows: usize,
    consumed: usize,
}

impl ArAccumulator {
    pub fn new(max_lag: usize) -> Self {
        let d = max_lag + 2;
        Self {
            max_lag,
            cross: vec![0.0; d * d],
            rows: 0,
            consumed: 0,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Number of observations absorbed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Absorbs `data[consumed..]`. The caller guarantees that the first
    /// `consumed` values are unchanged since the previous call.
    pub fn extend(&mut self, data: &[f64]) {
        let p = self.max_lag;
        let d = p + 2;
        let mut z = vec![0.0; d];
        for t in self.consumed.max(p)..data.len() {
            z[0] = 1.0;
            for j in 0..p {
                z[1 + j] = data[t - 1 - j];
            }
            z[d - 1] = data[t];
            for a in 0..d {
                let za = z[a];
                for b in a..d {
                    self.cross[a * d + b] += za * z[b];
                }
            }
            self.rows += 1;
        }
        self.consumed = self.consumed.max(data.len());
    }

    fn entry(&self, a: usize, b: usize) -> f64 {
        let d = self.max_lag + 2;
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.cross[a * d + b]
    }

    /// Fits every order on the accumulated rows and returns the BIC minimiser
    /// (ties toward the smaller order).
    pub fn fit(&self) -> Result<FittedAR, ModelError> {
        let p_max = self.max_lag;
        let n = self.rows;
        if self.consumed < p_max + 2 {
            return Err(ModelError::SeriesTooShort {
                needed: p_max + 2,
                available: self.consumed,
            });
        }
        let nf = n as f64;
        let y_col = p_max + 1;
        let yty = self.entry(y_col, y_col);
        let ybar = self.entry(0, y_col) / nf;
        let centered = yty - nf * ybar * ybar;
        if !(centered > 1e-12 * yty.max(1e-300)) {
            return Err(ModelError::SingularDesign);
        }

        let mut best: Option<FittedAR> = None;
        for p in 0..=p_max {
            let k = p + 1;
            let xtx = DMatrix::from_fn(k, k, |a, b| self.entry(a, b));
            let xty = DVector::from_fn(k, |a, _| self.entry(a, y_col));
            let Some(chol) = xtx.clone().cholesky() else {
                continue;
            };
            let beta = chol.solve(&xty);
            let rss = yty - beta.dot(&xty);
            let var = rss / nf;
            if !(var > 1e-12 * centered / nf) {
                // exact fit: collinear lags or a deterministic path
                continue;
            }
            let bic = nf * var.ln() + k as f64 * nf.ln();
            if best.as_ref().is_none_or(|b| bic < b.bic) {
                best = Some(FittedAR {
                    order: p,
                    intercept: beta[0],
                    coefficients: beta.iter().skip(1).copied().collect(),
                    residual_variance: var,
                    bic,
                });
            }
        }
        best.ok_or(ModelError::SingularDesign)
    }
}

/// Fits AR(p), `p <= max_lag`, on the whole history.
pub fn fit_ar(history: &[f64], max_lag: usize) -> Result<FittedAR, ModelError> {
    if max_lag == 0 {
        return Err(ModelError::InvalidSpec("max_lag must be at least 1".into()));
    }
    if history.len() < max_lag + 2 {
        return Err(ModelError::SeriesTooShort {
            needed: max_lag + 2,
            available: history.len(),
        });
    }
    let mut acc = ArAccumulator::new(max_lag);
    acc.extend(history);
    acc.fit()
}

pub fn forecast_ar(model: &FittedAR, history: &[f64], h: usize) -> Result<f64, ModelError> {
    if h == 0 {
        return Err(ModelError::InvalidSpec("horizon must be positive".into()));
    }
    let p = model.order;
    if history.len() < p {
        return Err(ModelError::HistoryTooShort {
            needed: p,
            available: history.len(),
        });
    }
    // path[i] holds Y_{n-p+i}; forecasts are appended as they are produced
    let mut path: Vec<f64> = history[history.len() - p..].to_vec();
    let mut next = model.intercept;
    for _ in 0..h {
        next = model.intercept;
        let len = path.len();
        for (j, c) in model.coefficients.iter().enumerate() {
            next += c * path[len - 1 - j];
        }
        path.push(next);
    }
    Ok(next)
}
