//! Synthetic process generators.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabError;
use crate::rng::{rng_from_seed, Rng};
use crate::series::TimeSeries;

/// Volatility path of a pure-scale process `Y_t = σ_t ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "path")]
pub enum SigmaPath {
    Constant {
        sigma: f64,
    },
    /// `σ_t` moves linearly from `from` at `t = 1` to `to` at `t = T`.
    LinearRamp {
        from: f64,
        to: f64,
    },
    /// GARCH(1,1) variance driven by the process's own shocks.
    Garch {
        omega: f64,
        alpha: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "process")]
pub enum ProcessKind {
    Ar1 {
        phi: f64,
        sigma: f64,
    },
    Garch11 {
        omega: f64,
        alpha: f64,
        beta: f64,
    },
    /// `Y_t = μ_t + base_sigma·ε_t`, `μ_t = delta·φ((T+1−t)/m_bump)`,
    /// `φ(u) = (1−u)_+^{beta_h}`: zero except over the last `m_bump` points.
    HolderDrift {
        m_bump: usize,
        delta: f64,
        beta_h: f64,
        base_sigma: f64,
    },
    PureScale {
        sigma: SigmaPath,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    pub t: usize,
    pub seed: u64,
}

fn garch_ok(omega: f64, alpha: f64, beta: f64) -> bool {
    omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0
}

impl ProcessKind {
    /// Drift over the full series with amplitude tied to `T`: the bump spans
    /// all `T` points and its amplitude is
    /// `strength · base_sigma · m^{-1/2} · (T/m)^β` with `m = T^{2β/(2β+1)}`,
    /// so the drift accumulated over the rate-optimal window is of order
    /// `m^{-1/2}` noise units. For `β = 1` the amplitude is
    /// `strength · base_sigma` whatever `T`.
    pub fn calibrated_drift(t: usize, beta: f64, strength: f64, base_sigma: f64) -> Self {
        let tf = t as f64;
        let m = tf.powf(2.0 * beta / (2.0 * beta + 1.0));
        ProcessKind::HolderDrift {
            m_bump: t,
            delta: strength * base_sigma * m.powf(-0.5) * (tf / m).powf(beta),
            beta_h: beta,
            base_sigma,
        }
    }

    pub fn validate(&self, t: usize) -> Result<(), LabError> {
        let bad = |msg: String| Err(LabError::InvalidSpec(msg));
        match *self {
            ProcessKind::Ar1 { phi, sigma } => {
                if !(phi.abs() < 1.0) || !(sigma > 0.0) {
                    return bad(format!("AR(1) needs |phi| < 1 and sigma > 0, got {phi}, {sigma}"));
                }
            }
            ProcessKind::Garch11 { omega, alpha, beta }
            | ProcessKind::PureScale {
                sigma: SigmaPath::Garch { omega, alpha, beta },
            } => {
                if !garch_ok(omega, alpha, beta) {
                    return bad(format!(
                        "GARCH needs omega > 0, alpha, beta >= 0, alpha + beta < 1; got {omega}, {alpha}, {beta}"
                    ));
                }
            }
            ProcessKind::HolderDrift {
                m_bump,
                delta,
                beta_h,
                base_sigma,
            } => {
                if m_bump == 0 || m_bump > t || !delta.is_finite() || !(beta_h > 0.0) || !(base_sigma > 0.0) {
                    return bad(format!(
                        "drift needs 1 <= m_bump <= T, finite delta, beta_h > 0, base_sigma > 0; got {m_bump}, {delta}, {beta_h}, {base_sigma}"
                    ));
                }
            }
            ProcessKind::PureScale {
                sigma: SigmaPath::Constant { sigma },
            } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            ProcessKind::PureScale {
                sigma: SigmaPath::LinearRamp { from, to },
            } => {
                if !(from > 0.0 && to > 0.0 && from.is_finite() && to.is_finite()) {
                    return bad(format!("ramp endpoints must be positive, got {from}, {to}"));
                }
            }
        }
        Ok(())
    }
}

/// Drift mean `μ_t` (1-based `t`).
pub fn drift_mean(t: usize, len: usize, m_bump: usize, delta: f64, beta_h: f64) -> f64 {
    let u = (len + 1 - t) as f64 / m_bump as f64;
    delta * (1.0 - u).max(0.0).powf(beta_h)
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn garch_path(rng: &mut Rng, n: usize, omega: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let mut h = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let y = h.sqrt() * normal(rng);
        out.push(y);
        h = omega + alpha * y * y + beta * h;
    }
    out
}

/// Deterministic in `spec`; length `spec.t`.
pub fn generate(spec: &ProcessSpec) -> Result<TimeSeries, LabError> {
    let n = spec.t;
    if n == 0 {
        return Err(LabError::InvalidSpec("T must be positive".into()));
    }
    spec.kind.validate(n)?;
    let mut rng = rng_from_seed(spec.seed);
    let values = match spec.kind {
        ProcessKind::Ar1 { phi, sigma } => {
            let mut y = sigma / (1.0 - phi * phi).sqrt() * normal(&mut rng);
            (0..n)
                .map(|i| {
                    if i > 0 {
                        y = phi * y + sigma * normal(&mut rng);
                    }
                    y
                })
                .collect()
        }
        ProcessKind::Garch11 { omega, alpha, beta }
        | ProcessKind::PureScale {
            sigma: SigmaPath::Garch { omega, alpha, beta },
        } => {
            // burn-in so the start does not sit at the unconditional variance
            let mut path = garch_path(&mut rng, n + 500, omega, alpha, beta);
            path.drain(..500);
            path
        }
        ProcessKind::HolderDrift {
            m_bump,
            delta,
            beta_h,
            base_sigma,
        } => (1..=n)
            .map(|t| drift_mean(t, n, m_bump, delta, beta_h) + base_sigma * normal(&mut rng))
            .collect(),
        ProcessKind::PureScale {
            sigma: SigmaPath::Constant { sigma },
        } => (0..n).map(|_| sigma * normal(&mut rng)).collect(),
        ProcessKind::PureScale {
            sigma: SigmaPath::LinearRamp { from, to },
        } => (0..n)
            .map(|i| {
                let w = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                (from + (to - from) * w) * normal(&mut rng)
            })
            .collect(),
    };
    TimeSeries::new(values).map_err(|e| LabError::InvalidSpec(e.to_string()))
}
