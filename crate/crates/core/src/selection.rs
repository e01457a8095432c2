//! Calibration-window selection by Winkler cross-validation.
//!
//! Candidates come from a geometric grid of ratios times the rate anchor
//! `T^{2β/(2β+1)}`. Each candidate `m` is scored on a trailing validation
//! fold: at every validation origin the half-width is the empirical quantile
//! of the `m` most recent scores already realised at that origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{kth_smallest, order_statistic_rank};
use crate::io::fmt_f64;
use crate::series::{split_scores, ScoreRecord, SeriesError, SplitSpec};

pub const DEFAULT_GRID_POINTS: usize = 30;
pub const DEFAULT_GRID_LO: f64 = 0.1;
pub const DEFAULT_GRID_HI: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid collapses to the single window {0}")]
    DegenerateGrid(usize),
    #[error("not enough scores: {0}")]
    InsufficientScores(String),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("score at origin {0} carries no volatility estimate")]
    MissingSigma(usize),
    #[error("selected window {m} sits on the {side:?} grid boundary")]
    BoundarySelected { m: usize, side: Boundary },
}

impl From<SeriesError> for SelectionError {
    fn from(e: SeriesError) -> Self {
        SelectionError::InsufficientScores(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    candidates: Vec<usize>,
    pub t_ref: usize,
    pub beta: f64,
    pub lo_ratio: f64,
    pub hi_ratio: f64,
    pub n_points: usize,
}

impl WindowGrid {
    /// Strictly increasing, positive.
    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// `T^{2β/(2β+1)}`.
    pub fn anchor(&self) -> f64 {
        rate_anchor(self.t_ref, self.beta)
    }

    /// A grid with explicit candidates (sorted and deduplicated).
    pub fn from_candidates(mut candidates: Vec<usize>) -> Result<Self, SelectionError> {
        candidates.sort_unstable();
        candidates.dedup();
        if candidates.is_empty() || candidates[0] == 0 {
            return Err(SelectionError::InvalidGrid("candidates must be positive".into()));
        }
        let n_points = candidates.len();
        Ok(Self {
            t_ref: *candidates.last().unwrap(),
            candidates,
            beta: 1.0,
            lo_ratio: 1.0,
            hi_ratio: 1.0,
            n_points,
        })
    }
}

pub fn rate_anchor(t: usize, beta: f64) -> f64 {
    (t as f64).powf(2.0 * beta / (2.0 * beta + 1.0))
}

/// `n_points` log-spaced ratios in `[lo, hi]` times the rate anchor, rounded,
/// clamped to at least 1 and deduplicated.
pub fn make_grid(t: usize, beta: f64, n_points: usize, lo: f64, hi: f64) -> Result<WindowGrid, SelectionError> {
    if t < 4 {
        return Err(SelectionError::InvalidGrid(format!("T = {t} < 4")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SelectionError::InvalidGrid(format!("beta = {beta}")));
    }
    if n_points == 0 || !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(SelectionError::InvalidGrid(format!(
            "need n_points >= 1 and 0 < lo <= hi, got {n_points}, [{lo}, {hi}]"
        )));
    }
    let anchor = rate_anchor(t, beta);
    let mut candidates: Vec<usize> = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let ratio = if n_points == 1 {
            lo
        } else {
            lo * (hi / lo).powf(i as f64 / (n_points - 1) as f64)
        };
        let m = ((ratio * anchor).round() as usize).max(1);
        if candidates.last() != Some(&m) {
            candidates.push(m);
        }
    }
    if candidates.len() == 1 && n_points > 1 && t < 8 {
        return Err(SelectionError::DegenerateGrid(candidates[0]));
    }
    Ok(WindowGrid {
        candidates,
        t_ref: t,
        beta,
        lo_ratio: lo,
        hi_ratio: hi,
        n_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    No,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub m: usize,
    /// `None` when the candidate exceeds the history available at the first
    /// validation origin.
    pub mean_winkler: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub m_hat: usize,
    pub per_candidate: Vec<CandidateScore>,
    pub at_boundary: Boundary,
    pub n_validation: usize,
    pub scaled: bool,
}

impl SelectionResult {
    pub fn best(&self) -> &CandidateScore {
        self.per_candidate
            .iter()
            .find(|c| c.m == self.m_hat)
            .expect("m_hat is a candidate")
    }

    /// `m,mean_winkler` rows (empty Winkler for dropped candidates) followed
    /// by a `# m_hat=...,boundary=...` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,mean_winkler\n");
        for c in &self.per_candidate {
            out.push_str(&format!(
                "{},{}\n",
                c.m,
                c.mean_winkler.map(fmt_f64).unwrap_or_default()
            ));
        }
        out.push_str(&format!(
            "# m_hat={},boundary={}\n",
            self.m_hat,
            match self.at_boundary {
                Boundary::No => "no",
                Boundary::Lower => "lower",
                Boundary::Upper => "upper",
            }
        ));
        out
    }
}

/// What to do when the selected window sits on the grid edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Report the flag and carry on.
    #[default]
    Flag,
    /// Treat a boundary selection as an error.
    Error,
    /// Ignore the boundary entirely.
    Accept,
}

impl BoundaryPolicy {
    pub fn apply(self, mut res: SelectionResult) -> Result<SelectionResult, SelectionError> {
        match (self, res.at_boundary) {
            (_, Boundary::No) | (BoundaryPolicy::Flag, _) => Ok(res),
            (BoundaryPolicy::Error, side) => Err(SelectionError::BoundarySelected { m: res.m_hat, side }),
            (BoundaryPolicy::Accept, _) => {
                res.at_boundary = Boundary::No;
                Ok(res)
            }
        }
    }
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flag" => Ok(Self::Flag),
            "error" => Ok(Self::Error),
            "accept" => Ok(Self::Accept),
            other => Err(format!("unknown boundary policy '{other}' (flag|error|accept)")),
        }
    }
}

/// Winkler cross-validation over `grid`.
///
/// `scores` are origin-sorted records from one horizon. The validation fold
/// is the trailing `split.validation_fraction` of records. With `scaled`,
/// quantiles are taken over `score / sigma` and half-widths multiplied by the
/// current sigma. Centres do not enter: the Winkler score of a symmetric
/// interval depends on the outcome only through the absolute error.
pub fn select_window(
    scores: &[ScoreRecord],
    grid: &WindowGrid,
    alpha: f64,
    split: SplitSpec,
    scaled: bool,
) -> Result<SelectionResult, SelectionError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SelectionError::InvalidAlpha(alpha));
    }
    let (_, val) = split_scores(scores, split)?;
    let first_val = scores.len() - val.len();
    let level = 1.0 - alpha;

    let values: Vec<f64> = if scaled {
        scores
            .iter()
            .map(|r| match r.sigma {
                Some(s) if s > 0.0 => Ok(r.score / s),
                _ => Err(SelectionError::MissingSigma(r.origin)),
            })
            .collect::<Result<_, _>>()?
    } else {
        scores.iter().map(|r| r.score).collect()
    };

    // number of records realised by each validation origin
    let mut realized = Vec::with_capacity(val.len());
    let mut k = 0usize;
    for (i, rec) in scores.iter().enumerate().skip(first_val) {
        while k < i && scores[k].realized_at() <= rec.origin {
            k += 1;
        }
        realized.push(k);
    }
    let available = realized[0];

    let per_candidate: Vec<CandidateScore> = grid
        .candidates()
        .par_iter()
        .map(|&m| {
            if m > available {
                return CandidateScore {
                    m,
                    mean_winkler: None,
                    coverage: None,
                };
            }
            let rank = order_statistic_rank(level, m).min(m);
            let mut buf = Vec::with_capacity(m);
            let mut total_w = 0.0;
            let mut hits = 0usize;
            for (j, rec) in val.iter().enumerate() {
                let end = realized[j];
                buf.clear();
                buf.extend_from_slice(&values[end - m..end]);
                let q = kth_smallest(&mut buf, rank);
                let sigma = if scaled { rec.sigma.unwrap_or(1.0) } else { 1.0 };
                let hw = q * sigma;
                total_w += 2.0 * hw + (2.0 / alpha) * (rec.score - hw).max(0.0);
                hits += (rec.score <= hw) as usize;
            }
            CandidateScore {
                m,
                mean_winkler: Some(total_w / val.len() as f64),
                coverage: Some(hits as f64 / val.len() as f64),
            }
        })
        .collect();

    let evaluated: Vec<&CandidateScore> = per_candidate.iter().filter(|c| c.mean_winkler.is_some()).collect();
    if evaluated.is_empty() {
        return Err(SelectionError::InsufficientScores(format!(
            "smallest candidate {} exceeds the {available} scores realised before validation",
            grid.candidates()[0]
        )));
    }
    // candidates are increasing, so a strict comparison keeps the smaller m on ties
    let mut best = evaluated[0];
    for c in &evaluated[1..] {
        if c.mean_winkler.unwrap() < best.mean_winkler.unwrap() {
            best = c;
        }
    }
    let at_boundary = if evaluated.len() > 1 && best.m == evaluated[0].m {
        Boundary::Lower
    } else if best.m == evaluated[evaluated.len() - 1].m {
        Boundary::Upper
    } else {
        Boundary::No
    };
    Ok(SelectionResult {
        m_hat: best.m,
        per_candidate,
        at_boundary,
        n_validation: val.len(),
        scaled,
    })
}
