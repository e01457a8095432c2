//! ARMA(1,1)-GARCH(1,1) by Gaussian quasi-maximum likelihood.
//!
//! Mean:      Y_t = c + phi Y_{t-1} + theta e_{t-1} + e_t
//! Variance:  s2_t = omega + alpha e_{t-1}^2 + beta s2_{t-1}
//!
//! The optimizer works on an unconstrained vector; feasibility
//! (`omega > 0`, `alpha, beta >= 0`, `alpha + beta < 1`, `|phi|, |theta| < 1`)
//! holds by construction of the inverse transform.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::rng::{derive_seed, rng_from_seed};

pub const MIN_FIT_LEN: usize = 50;

/// Intermediate variances above this are reported as overflow.
pub const VARIANCE_CEILING: f64 = 1e30;

const ROOT_BOUND: f64 = 0.999;
const PERSISTENCE_BOUND: f64 = 0.9999;

/// Half the 95% chi-square(1) critical value: likelihood gaps below this are
/// not significant.
pub const PARSIMONY_NLL_TOLERANCE: f64 = 1.92;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaParams {
    pub intercept: f64,
    pub ar1: f64,
    pub ma1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn is_stationary(&self) -> bool {
        self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 && self.persistence() < 1.0
    }
}

/// Filter state at the end of the data: last observation, last residual and
/// last conditional variance `s2_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchState {
    pub last_value: f64,
    pub last_residual: f64,
    pub last_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedArmaGarch {
    pub arma: ArmaParams,
    pub garch: GarchParams,
    pub last_state: GarchState,
    /// Variance used to start the recursion; reused when refiltering.
    pub initial_variance: f64,
    pub neg_log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchFitOptions {
    pub restarts: usize,
    pub max_iters: u64,
}

impl Default for GarchFitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 1500,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn unpack(x: &[f64]) -> (ArmaParams, GarchParams) {
    let persistence = PERSISTENCE_BOUND * logistic(x[4]);
    let alpha = persistence * logistic(x[5]);
    (
        ArmaParams {
            intercept: x[0],
            ar1: ROOT_BOUND * x[1].tanh(),
            ma1: ROOT_BOUND * x[2].tanh(),
        },
        GarchParams {
            omega: x[3].exp(),
            alpha,
            beta: persistence - alpha,
        },
    )
}

fn pack(arma: ArmaParams, garch: GarchParams) -> Vec<f64> {
    let p = garch.persistence() / PERSISTENCE_BOUND;
    vec![
        arma.intercept,
        (arma.ar1 / ROOT_BOUND).atanh(),
        (arma.ma1 / ROOT_BOUND).atanh(),
        garch.omega.ln(),
        logit(p),
        logit(garch.alpha / garch.persistence()),
    ]
}

/// Runs the ARMA and variance recursions over `y`. Returns the Gaussian
/// negative log-likelihood (constants dropped) and the end state.
fn filter(y: &[f64], arma: &ArmaParams, garch: &GarchParams, s2_init: f64) -> (f64, GarchState) {
    let mut e_prev = 0.0;
    let mut s2 = s2_init;
    let mut nll = 0.0;
    for t in 1..y.len() {
        if t > 1 {
            s2 = garch.omega + garch.alpha * e_prev * e_prev + garch.beta * s2;
        }
        let e = y[t] - arma.intercept - arma.ar1 * y[t - 1] - arma.ma1 * e_prev;
        nll += 0.5 * (s2.ln() + e * e / s2);
        e_prev = e;
    }
    (
        nll,
        GarchState {
            last_value: *y.last().expect("nonempty"),
            last_residual: e_prev,
            last_variance: s2,
        },
    )
}

struct Qmle<'a> {
    y: &'a [f64],
    s2_init: f64,
}

impl CostFunction for Qmle<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, argmin::core::Error> {
        let (arma, garch) = unpack(x);
        let (nll, _) = filter(self.y, &arma, &garch, self.s2_init);
        Ok(if nll.is_finite() { nll } else { f64::INFINITY })
    }
}

fn simplex_around(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += if i == 0 { 0.1 } else { 0.5 };
        simplex.push(v);
    }
    simplex
}

pub fn fit_arma_garch(history: &[f64]) -> Result<FittedArmaGarch, ModelError> {
    fit_arma_garch_with(history, &GarchFitOptions::default(), 0)
}

/// QMLE with `opts.restarts` Nelder-Mead runs: one from a moderate-persistence
/// point, one from a near-constant-variance point, the rest from points drawn
/// with a generator seeded by `seed`.
///
/// When `alpha` is near zero the likelihood is flat in `beta`, so restarts
/// can land anywhere along that ridge. Among restarts whose negative
/// log-likelihood is within [`PARSIMONY_NLL_TOLERANCE`] of the best, the one
/// with the lowest persistence is returned.
pub fn fit_arma_garch_with(history: &[f64], opts: &GarchFitOptions, seed: u64) -> Result<FittedArmaGarch, ModelError> {
    let n = history.len();
    if n < MIN_FIT_LEN {
        return Err(ModelError::SeriesTooShort {
            needed: MIN_FIT_LEN,
            available: n,
        });
    }
    let mean = history.iter().sum::<f64>() / n as f64;
    let var = history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(ModelError::SingularDesign);
    }
    // fit on the standardised series; rescale afterwards
    let scale = var.sqrt();
    let z: Vec<f64> = history.iter().map(|v| (v - mean) / scale).collect();
    let problem = Qmle { y: &z, s2_init: 1.0 };

    let mut rng = rng_from_seed(derive_seed(seed, &[0x6a5c]));
    let zero_arma = ArmaParams {
        intercept: 0.0,
        ar1: 0.0,
        ma1: 0.0,
    };
    let mut runs: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in 0..opts.restarts.max(1) {
        let (arma0, garch0) = if r == 1 {
            (
                zero_arma,
                GarchParams {
                    omega: 0.98,
                    alpha: 0.01,
                    beta: 0.01,
                },
            )
        } else if r == 0 {
            (
                ArmaParams {
                    intercept: 0.0,
                    ar1: 0.0,
                    ma1: 0.0,
                },
                GarchParams {
                    omega: 0.1,
                    alpha: 0.05,
                    beta: 0.85,
                },
            )
        } else {
            let p: f64 = rng.random_range(0.05..0.98);
            let share: f64 = rng.random_range(0.05..0.6);
            (
                ArmaParams {
                    intercept: rng.random_range(-0.1..0.1),
                    ar1: rng.random_range(-0.5..0.5),
                    ma1: rng.random_range(-0.5..0.5),
                },
                GarchParams {
                    omega: 1.0 - p,
                    alpha: p * share,
                    beta: p * (1.0 - share),
                },
            )
        };
        let x0 = pack(arma0, garch0);
        let solver = NelderMead::new(simplex_around(&x0))
            .with_sd_tolerance(1e-9)
            .expect("positive tolerance");
        let Ok(res) = Executor::new(
            Qmle {
                y: problem.y,
                s2_init: problem.s2_init,
            },
            solver,
        )
        .configure(|s| s.max_iters(opts.max_iters))
        .run() else {
            continue;
        };
        let cost = res.state().get_best_cost();
        let Some(param) = res.state().get_best_param().cloned() else {
            continue;
        };
        if cost.is_finite() {
            runs.push((cost, param));
        }
    }

    let best_nll = runs
        .iter()
        .map(|(c, _)| *c)
        .min_by(f64::total_cmp)
        .ok_or(ModelError::OptimizerDiverged)?;
    let (nll, x) = runs
        .into_iter()
        .filter(|(c, _)| *c <= best_nll + PARSIMONY_NLL_TOLERANCE)
        .min_by(|a, b| {
            let pa = unpack(&a.1).1.persistence();
            let pb = unpack(&b.1).1.persistence();
            pa.total_cmp(&pb).then(a.0.total_cmp(&b.0))
        })
        .expect("best run is within tolerance of itself");
    let (arma_z, garch_z) = unpack(&x);
    // Y = mean + scale Z  =>  c_Y = mean (1 - phi) + scale c_Z, omega_Y = scale^2 omega_Z
    let arma = ArmaParams {
        intercept: mean * (1.0 - arma_z.ar1) + scale * arma_z.intercept,
        ar1: arma_z.ar1,
        ma1: arma_z.ma1,
    };
    let garch = GarchParams {
        omega: garch_z.omega * var,
        alpha: garch_z.alpha,
        beta: garch_z.beta,
    };
    assert!(garch.is_stationary(), "transform must keep alpha + beta < 1");
    let (_, last_state) = filter(history, &arma, &garch, var);
    Ok(FittedArmaGarch {
        arma,
        garch,
        last_state,
        initial_variance: var,
        neg_log_likelihood: nll + (n - 1) as f64 * scale.ln(),
    })
}

impl FittedArmaGarch {
    /// Same parameters, filter state recomputed over `history`.
    pub fn refilter(&self, history: &[f64]) -> Result<Self, ModelError> {
        if history.len() < 2 {
            return Err(ModelError::HistoryTooShort {
                needed: 2,
                available: history.len(),
            });
        }
        let (nll, last_state) = filter(history, &self.arma, &self.garch, self.initial_variance);
        if !last_state.last_variance.is_finite() || last_state.last_variance > VARIANCE_CEILING {
            return Err(ModelError::NumericOverflow(0));
        }
        Ok(Self {
            last_state,
            neg_log_likelihood: nll,
            ..self.clone()
        })
    }

    /// One-step-ahead conditional variance `s2_{t+1}`.
    pub fn next_variance(&self) -> f64 {
        let g = &self.garch;
        let s = &self.last_state;
        g.omega + g.alpha * s.last_residual * s.last_residual + g.beta * s.last_variance
    }

    /// ARMA conditional mean `h` steps ahead.
    pub fn forecast_mean(&self, h: usize) -> f64 {
        let a = &self.arma;
        let s = &self.last_state;
        let mut m = a.intercept + a.ar1 * s.last_value + a.ma1 * s.last_residual;
        for _ in 1..h {
            m = a.intercept + a.ar1 * m;
        }
        m
    }
}

/// `sqrt` of the `h`-step variance recursion
/// `s2_{t+h} = omega sum_{j<h-1} (alpha+beta)^j + (alpha+beta)^{h-1} s2_{t+1}`.
pub fn forecast_volatility(model: &FittedArmaGarch, h: usize) -> Result<f64, ModelError> {
    if h == 0 {
        return Err(ModelError::InvalidSpec("horizon must be positive".into()));
    }
    let g = &model.garch;
    let persistence = g.persistence();
    let mut v = model.next_variance();
    for step in 1..=h {
        if step > 1 {
            v = g.omega + persistence * v;
        }
        if !v.is_finite() || v > VARIANCE_CEILING {
            return Err(ModelError::NumericOverflow(step));
        }
    }
    Ok(v.sqrt())
}
