//! Windowed empirical quantiles and interval construction.
//!
//! The calibration quantile is the `k`-th order statistic of the window,
//! with `k` the smallest integer satisfying `k / m >= level`. This is exactly
//! `inf { x : F_m(x) >= level }` for the empirical CDF `F_m` of the window;
//! no interpolation is applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{PredictionInterval, ScoreRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("window {m} exceeds the {available} available scores")]
    WindowTooLarge { m: usize, available: usize },
    #[error("window must hold at least one score")]
    EmptyWindow,
    #[error("score at origin {0} carries no volatility estimate")]
    MissingSigma(usize),
    #[error("volatility must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("scaled calibration set requires a volatility forecast")]
    ScaledSetRequiresSigma,
    #[error("unscaled calibration set passed to the scaled interval")]
    UnscaledSet,
    #[error("invalid score {0}: must be finite and nonnegative")]
    InvalidScore(f64),
    #[error("level {0} outside (0, 1]")]
    InvalidLevel(f64),
}

/// The `m` most recent scores, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    scores: Vec<f64>,
    scaled: bool,
}

impl CalibrationSet {
    pub fn new(scores: Vec<f64>, scaled: bool) -> Result<Self, CalibrationError> {
        if scores.is_empty() {
            return Err(CalibrationError::EmptyWindow);
        }
        if let Some(&bad) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(CalibrationError::InvalidScore(bad));
        }
        Ok(Self { scores, scaled })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn m(&self) -> usize {
        self.scores.len()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }
}

/// Last `m` records by origin (records are assumed origin-sorted).
pub fn take_window(scores: &[ScoreRecord], m: usize) -> Result<CalibrationSet, CalibrationError> {
    let tail = window_tail(scores, m)?;
    CalibrationSet::new(tail.iter().map(|r| r.score).collect(), false)
}

/// Last `m` records, each divided by its volatility forecast.
pub fn scale_window(scores: &[ScoreRecord], m: usize) -> Result<CalibrationSet, CalibrationError> {
    let tail = window_tail(scores, m)?;
    let scaled = tail
        .iter()
        .map(|r| match r.sigma {
            Some(s) if s > 0.0 => Ok(r.score / s),
            Some(s) => Err(CalibrationError::NonPositiveSigma(s)),
            None => Err(CalibrationError::MissingSigma(r.origin)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    CalibrationSet::new(scaled, true)
}

fn window_tail(scores: &[ScoreRecord], m: usize) -> Result<&[ScoreRecord], CalibrationError> {
    if m == 0 {
        return Err(CalibrationError::EmptyWindow);
    }
    if m > scores.len() {
        return Err(CalibrationError::WindowTooLarge {
            m,
            available: scores.len(),
        });
    }
    Ok(&scores[scores.len() - m..])
}

/// Smallest `k` in `1..=m` with `k / m >= level` (as evaluated in `f64`).
/// Returns `m + 1` when no such `k` exists.
pub fn order_statistic_rank(level: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut k = ((level * mf).ceil().max(1.0) as usize).min(m + 1);
    while k > 1 && (k - 1) as f64 / mf >= level {
        k -= 1;
    }
    while k <= m && (k as f64) / mf < level {
        k += 1;
    }
    k
}

/// `k`-th smallest (1-based) value of `values`; reorders the slice.
pub(crate) fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Empirical quantile `inf { x : F_m(x) >= level }` of the calibration set.
pub fn empirical_quantile(cal: &CalibrationSet, level: f64) -> f64 {
    assert!(level > 0.0 && level <= 1.0, "level {level} outside (0, 1]");
    quantile_of(cal.scores(), level)
}

/// Empirical quantile of a plain slice of scores.
pub fn quantile_of(scores: &[f64], level: f64) -> f64 {
    let k = order_statistic_rank(level, scores.len());
    let mut buf = scores.to_vec();
    kth_smallest(&mut buf, k.min(scores.len()))
}

/// Conformal half-width at miscoverage `alpha`. With `plus_one` the rank is
/// `ceil((1 - alpha)(m + 1))`, as in exchangeable split conformal; when that
/// rank exceeds `m` the half-width is infinite.
pub fn conformal_quantile(cal: &CalibrationSet, alpha: f64, plus_one: bool) -> f64 {
    if !plus_one {
        return empirical_quantile(cal, 1.0 - alpha);
    }
    let m = cal.m();
    let k = order_statistic_rank(1.0 - alpha, m + 1);
    if k > m {
        return f64::INFINITY;
    }
    let mut buf = cal.scores().to_vec();
    kth_smallest(&mut buf, k)
}

fn check_alpha(alpha: f64) -> Result<(), CalibrationError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CalibrationError::InvalidLevel(1.0 - alpha))
    }
}

/// `[center - q, center + q]` with `q` the empirical `(1 - alpha)`-quantile.
pub fn rocp_interval(center: f64, cal: &CalibrationSet, alpha: f64) -> Result<PredictionInterval, CalibrationError> {
    check_alpha(alpha)?;
    if cal.is_scaled() {
        return Err(CalibrationError::ScaledSetRequiresSigma);
    }
    let q = empirical_quantile(cal, 1.0 - alpha);
    Ok(PredictionInterval::symmetric(center, q, 1.0 - alpha))
}

/// `[center - q_sc sigma_now, center + q_sc sigma_now]` from a scaled set.
pub fn vs_rocp_interval(
    center: f64,
    cal: &CalibrationSet,
    sigma_now: f64,
    alpha: f64,
) -> Result<PredictionInterval, CalibrationError> {
    check_alpha(alpha)?;
    if !(sigma_now > 0.0) || !sigma_now.is_finite() {
        return Err(CalibrationError::NonPositiveSigma(sigma_now));
    }
    if !cal.is_scaled() {
        return Err(CalibrationError::UnscaledSet);
    }
    let q = empirical_quantile(cal, 1.0 - alpha);
    Ok(PredictionInterval::symmetric(center, q * sigma_now, 1.0 - alpha))
}

/// How the calibration window is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum Scheme {
    /// Every realised score.
    Full,
    /// The `m` most recent raw scores.
    Rolling { m: usize },
    /// The `m` most recent volatility-scaled scores.
    Scaled { m: usize },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Full => "full",
            Scheme::Rolling { .. } => "rolling",
            Scheme::Scaled { .. } => "vs",
        }
    }

    pub fn window(&self) -> Option<usize> {
        match *self {
            Scheme::Full => None,
            Scheme::Rolling { m } | Scheme::Scaled { m } => Some(m),
        }
    }
}

/// One step of a sequential backtest: the realised score at an origin and
/// the half-width the scheme would have issued there using only scores
/// realised by that origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestStep {
    pub origin: usize,
    pub score: f64,
    pub half_width: f64,
}

impl BacktestStep {
    /// Interval centred at zero with the score as the outcome; coverage and
    /// Winkler values are invariant to the choice of centre.
    pub fn as_pair(&self, alpha: f64) -> (f64, PredictionInterval) {
        (
            self.score,
            PredictionInterval::symmetric(0.0, self.half_width, 1.0 - alpha),
        )
    }
}

/// Replays a scheme over origin-sorted scores. At record `i` (origin `t`),
/// the calibration window is drawn from records with origin `<= t - h`,
/// i.e. scores whose outcomes are observed by time `t`. Records for which
/// the scheme's window is not yet full are skipped, as are records before
/// `start_origin`.
pub fn backtest(
    scores: &[ScoreRecord],
    scheme: Scheme,
    alpha: f64,
    start_origin: usize,
) -> Result<Vec<BacktestStep>, CalibrationError> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha;
    let mut steps = Vec::new();
    let mut buf = Vec::new();
    let mut realized = 0usize;
    for (i, rec) in scores.iter().enumerate() {
        while realized < i && scores[realized].realized_at() <= rec.origin {
            realized += 1;
        }
        if rec.origin < start_origin {
            continue;
        }
        let past = &scores[..realized];
        let m = match scheme.window() {
            Some(m) => m,
            None => past.len(),
        };
        if m == 0 || past.len() < m {
            continue;
        }
        let window = &past[past.len() - m..];
        buf.clear();
        let (score, sigma_now) = match scheme {
            Scheme::Scaled { .. } => {
                for r in window {
                    let s = r.sigma.ok_or(CalibrationError::MissingSigma(r.origin))?;
                    if !(s > 0.0) {
                        return Err(CalibrationError::NonPositiveSigma(s));
                    }
                    buf.push(r.score / s);
                }
                let s_now = rec.sigma.ok_or(CalibrationError::MissingSigma(rec.origin))?;
                (rec.score, s_now)
            }
            _ => {
                buf.extend(window.iter().map(|r| r.score));
                (rec.score, 1.0)
            }
        };
        let k = order_statistic_rank(level, m);
        let q = kth_smallest(&mut buf, k.min(m));
        steps.push(BacktestStep {
            origin: rec.origin,
            score,
            half_width: q * sigma_now,
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn set(v: &[f64]) -> CalibrationSet {
        CalibrationSet::new(v.to_vec(), false).unwrap()
    }

    fn recs(scores: &[f64], sigmas: &[Option<f64>]) -> Vec<ScoreRecord> {
        scores
            .iter()
            .zip(sigmas)
            .enumerate()
            .map(|(i, (&s, &sig))| ScoreRecord::new(i + 1, 1, s, sig))
            .collect()
    }

    /// Smallest calibration value `x` with `#{s <= x} / m >= level`.
    fn brute_force_quantile(scores: &[f64], level: f64) -> f64 {
        let m = scores.len() as f64;
        let mut cands = scores.to_vec();
        cands.sort_by(f64::total_cmp);
        *cands
            .iter()
            .find(|&&x| scores.iter().filter(|&&s| s <= x).count() as f64 / m >= level)
            .unwrap()
    }

    #[test]
    fn quantile_examples() {
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&set(&ten), 0.9), 9.0);
        assert_eq!(empirical_quantile(&set(&[4.2]), 0.37), 4.2);
        assert_eq!(empirical_quantile(&set(&[3.0, 1.0, 2.0]), 1.0), 3.0);
    }

    #[test]
    fn rank_handles_float_products() {
        // 0.9 * 10 evaluates to 9.000000000000002 in f64
        assert_eq!(order_statistic_rank(0.9, 10), 9);
        assert_eq!(order_statistic_rank(0.5, 4), 2);
        assert_eq!(order_statistic_rank(1.0, 7), 7);
        assert_eq!(order_statistic_rank(1e-9, 7), 1);
    }

    #[test]
    fn window_selection() {
        let r = recs(&[1.0; 10], &[None; 10]);
        let w = take_window(&r, 3).unwrap();
        assert_eq!(w.m(), 3);
        assert_eq!(take_window(&r, 10).unwrap().m(), 10);
        assert_eq!(
            take_window(&r[..5], 6),
            Err(CalibrationError::WindowTooLarge { m: 6, available: 5 })
        );
    }

    #[test]
    fn scaled_window() {
        let r = recs(&[2.0, 4.0], &[Some(1.0), Some(2.0)]);
        assert_eq!(scale_window(&r, 2).unwrap().scores(), &[2.0, 2.0]);
        let unit = recs(&[0.5, 3.0, 1.5], &[Some(1.0); 3]);
        assert_eq!(
            scale_window(&unit, 3).unwrap().scores(),
            take_window(&unit, 3).unwrap().scores()
        );
        let gap = recs(&[1.0, 1.0], &[Some(1.0), None]);
        assert_eq!(scale_window(&gap, 2), Err(CalibrationError::MissingSigma(2)));
    }

    #[test]
    fn interval_examples() {
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        let iv = rocp_interval(0.0, &set(&ten), 0.1).unwrap();
        assert_eq!((iv.lower, iv.upper), (-9.0, 9.0));
        let iv = rocp_interval(5.0, &set(&[0.0, 0.0]), 0.1).unwrap();
        assert_eq!((iv.lower, iv.upper), (5.0, 5.0));
        let iv = rocp_interval(5.0, &set(&[1.0, 2.0, 3.0, 4.0]), 0.5).unwrap();
        assert_eq!((iv.lower, iv.upper), (3.0, 7.0));
    }

    #[test]
    fn scaled_interval_examples() {
        let sc = CalibrationSet::new(vec![1.0, 2.0], true).unwrap();
        let iv = vs_rocp_interval(0.0, &sc, 3.0, 0.1).unwrap();
        assert_eq!((iv.lower, iv.upper), (-6.0, 6.0));
        let plain = rocp_interval(0.0, &set(&[1.0, 2.0]), 0.1).unwrap();
        let unit = vs_rocp_interval(0.0, &sc, 1.0, 0.1).unwrap();
        assert_eq!((plain.lower, plain.upper), (unit.lower, unit.upper));
        assert_eq!(
            vs_rocp_interval(0.0, &sc, 0.0, 0.1),
            Err(CalibrationError::NonPositiveSigma(0.0))
        );
        assert_eq!(
            rocp_interval(0.0, &sc, 0.1),
            Err(CalibrationError::ScaledSetRequiresSigma)
        );
    }

    #[test]
    fn plus_one_variant() {
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        // ceil(0.9 * 11) = 10
        assert_eq!(conformal_quantile(&set(&ten), 0.1, true), 10.0);
        assert_eq!(conformal_quantile(&set(&ten), 0.1, false), 9.0);
        assert_eq!(conformal_quantile(&set(&[1.0, 2.0]), 0.1, true), f64::INFINITY);
    }

    #[test]
    fn brute_force_conformance_on_random_sets() {
        let mut rng = crate::rng::rng_from_seed(17);
        for _ in 0..2000 {
            let m = rng.random_range(1..15);
            // coarse values force ties
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
            let level = rng.random_range(0.01..=1.0);
            assert_eq!(empirical_quantile(&set(&v), level), brute_force_quantile(&v, level));
        }
    }

    #[test]
    fn backtest_uses_only_realised_scores() {
        // h = 2: at origin t, scores with origin <= t - 2 are realised
        let r: Vec<ScoreRecord> = (1..=6).map(|t| ScoreRecord::new(t, 2, t as f64, None)).collect();
        let steps = backtest(&r, Scheme::Rolling { m: 2 }, 0.5, 1).unwrap();
        // first usable origin is 4 (scores at 1 and 2 realised)
        assert_eq!(steps[0].origin, 4);
        assert_eq!(steps[0].half_width, 1.0);
        let full = backtest(&r, Scheme::Full, 0.5, 1).unwrap();
        assert_eq!(full[0].origin, 3);
        assert_eq!(full.last().unwrap().half_width, 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scores() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..100.0, 1..40)
        }

        proptest! {
            #[test]
            fn monotone_in_level(v in scores(), a in 0.001f64..1.0, b in 0.001f64..1.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(empirical_quantile(&set(&v), lo) <= empirical_quantile(&set(&v), hi));
            }

            #[test]
            fn scale_equivariant(v in scores(), c in 0.01f64..50.0, level in 0.01f64..1.0) {
                let scaled: Vec<f64> = v.iter().map(|s| s * c).collect();
                let q = empirical_quantile(&set(&v), level);
                prop_assert_eq!(empirical_quantile(&set(&scaled), level), q * c);
            }

            #[test]
            fn adding_a_large_score_never_lowers(v in scores(), level in 0.01f64..1.0, extra in 0.0f64..10.0) {
                let q = empirical_quantile(&set(&v), level);
                let mut w = v.clone();
                w.push(q + extra);
                prop_assert!(empirical_quantile(&set(&w), level) >= q);
            }

            #[test]
            fn matches_inf_definition(v in scores(), level in 0.001f64..=1.0) {
                prop_assert_eq!(empirical_quantile(&set(&v), level), brute_force_quantile(&v, level));
            }
        }
    }
}
