//! Core data types shared across the crate: the observed series, the
//! rolling-origin score record, prediction intervals and fold splitting.
//!
//! Origins are 1-based everywhere they are visible to users, so origin `t`
//! refers to the prefix `Y_1, ..., Y_t`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series is empty")]
    EmptySeries,
    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error("timestamps not strictly increasing at index {0}")]
    NonMonotoneTimestamps(usize),
    #[error("timestamp count {timestamps} does not match value count {values}")]
    TimestampLength { values: usize, timestamps: usize },
    #[error("insufficient scores: needed {needed}, available {available}")]
    InsufficientScores { needed: usize, available: usize },
    #[error("invalid split fractions ({0}, {1})")]
    InvalidSplit(f64, f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Canonical frequency classes recognised by the experiment module.
pub const CANONICAL_FREQS: [&str; 5] = ["Yearly", "Quarterly", "Monthly", "Weekly", "Daily"];

/// An ordered, finite, univariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    id: Option<String>,
    freq_tag: Option<String>,
    timestamps: Option<Vec<i64>>,
}

impl TimeSeries {
    /// Builds a series without timestamps.
    pub fn new(values: Vec<f64>) -> Result<Self, SeriesError> {
        validate_series(values, None, None)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<i64>) -> Result<Self, SeriesError> {
        check_timestamps(self.values.len(), &timestamps)?;
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a validated series; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn freq_tag(&self) -> Option<&str> {
        self.freq_tag.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    /// Re-runs validation over an existing series.
    pub fn revalidate(&self) -> Result<Self, SeriesError> {
        let s = validate_series(self.values.clone(), self.id.clone(), self.freq_tag.clone())?;
        match &self.timestamps {
            Some(ts) => s.with_timestamps(ts.clone()),
            None => Ok(s),
        }
    }
}

/// Validates raw observations into a [`TimeSeries`].
pub fn validate_series(raw: Vec<f64>, id: Option<String>, freq_tag: Option<String>) -> Result<TimeSeries, SeriesError> {
    if raw.is_empty() {
        return Err(SeriesError::EmptySeries);
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(SeriesError::NonFiniteValue(i));
    }
    Ok(TimeSeries {
        values: raw,
        id,
        freq_tag,
        timestamps: None,
    })
}

fn check_timestamps(n: usize, ts: &[i64]) -> Result<(), SeriesError> {
    if ts.len() != n {
        return Err(SeriesError::TimestampLength {
            values: n,
            timestamps: ts.len(),
        });
    }
    if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
        return Err(SeriesError::NonMonotoneTimestamps(i + 1));
    }
    Ok(())
}

/// One pseudo-out-of-sample score `|Y_{t+h} - Yhat_{t+h|t}|` at origin `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// 1-based forecast origin.
    pub origin: usize,
    pub horizon: usize,
    /// Raw absolute error, in units of the series.
    pub score: f64,
    /// Volatility forecast for the same origin and horizon, if a
    /// volatility model was used.
    pub sigma: Option<f64>,
}

impl ScoreRecord {
    pub fn new(origin: usize, horizon: usize, score: f64, sigma: Option<f64>) -> Self {
        Self {
            origin,
            horizon,
            score,
            sigma,
        }
    }

    /// Index of the last observation this score depends on.
    pub fn realized_at(&self) -> usize {
        self.origin + self.horizon
    }
}

/// A symmetric conformal interval around a point forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl PredictionInterval {
    /// Interval `[center - half_width, center + half_width]`.
    pub fn symmetric(center: f64, half_width: f64, level: f64) -> Self {
        debug_assert!(half_width >= 0.0 || half_width.is_nan());
        Self {
            center,
            lower: center - half_width,
            upper: center + half_width,
            level,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Fractions of a score sequence given to the calibration fold (first
/// records) and the validation fold (last records).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub calibration_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            calibration_fraction: 0.6,
            validation_fraction: 0.4,
        }
    }
}

impl SplitSpec {
    pub fn new(calibration_fraction: f64, validation_fraction: f64) -> Result<Self, SeriesError> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(calibration_fraction)
            || !ok(validation_fraction)
            || calibration_fraction + validation_fraction > 1.0 + 1e-12
        {
            return Err(SeriesError::InvalidSplit(calibration_fraction, validation_fraction));
        }
        Ok(Self {
            calibration_fraction,
            validation_fraction,
        })
    }

    /// Fold sizes `(n_cal, n_val)` for `n` records. Sizes are floored, with a
    /// small tolerance so that products like `0.7 * 10` land on 7.
    pub fn fold_sizes(&self, n: usize) -> (usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let n_cal = floor(self.calibration_fraction).min(n);
        let n_val = floor(self.validation_fraction).min(n - n_cal);
        (n_cal, n_val)
    }
}

/// Splits origin-sorted scores into a leading calibration fold and a
/// trailing validation fold. Records between the folds (when the fractions
/// sum to less than one) belong to neither.
pub fn split_scores(scores: &[ScoreRecord], spec: SplitSpec) -> Result<(&[ScoreRecord], &[ScoreRecord]), SeriesError> {
    let n = scores.len();
    let (n_cal, n_val) = spec.fold_sizes(n);
    if n_cal == 0 || n_val == 0 {
        // smallest n giving both folds at least one record
        let needed = (1..=n.max(2) * 1000 + 2)
            .find(|&k| {
                let (c, v) = spec.fold_sizes(k);
                c >= 1 && v >= 1
            })
            .unwrap_or(2);
        return Err(SeriesError::InsufficientScores { needed, available: n });
    }
    debug_assert!(scores.windows(2).all(|w| w[0].origin < w[1].origin));
    Ok((&scores[..n_cal], &scores[n - n_val..]))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    value: f64,
    #[serde(default)]
    timestamp: Option<String>,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    freq: Option<String>,
}

fn parse_timestamp(raw: &str) -> Result<i64, SeriesError> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
        return Ok(dt.and_utc().timestamp());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt.and_utc().timestamp());
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp());
    }
    Err(SeriesError::Csv(format!("unparseable timestamp {raw:?}")))
}

/// Reads one or more series from CSV. A `value` column is required;
/// `timestamp`, `id` and `freq` are optional. Rows sharing an `id` form one
/// series (long format), in file order; series are returned in order of
/// first appearance.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<TimeSeries>, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| SeriesError::Csv(e.to_string()))?.clone();
    if !headers.iter().any(|h| h == "value") {
        return Err(SeriesError::Csv("missing required column `value`".into()));
    }

    struct Acc {
        values: Vec<f64>,
        stamps: Vec<Option<i64>>,
        freq: Option<String>,
    }
    let mut order: Vec<Option<String>> = Vec::new();
    let mut groups: BTreeMap<Option<String>, Acc> = BTreeMap::new();
    for (row_idx, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = rec.map_err(|e| SeriesError::Csv(format!("row {}: {e}", row_idx + 1)))?;
        let id = row.id.filter(|s| !s.is_empty());
        let stamp = match row.timestamp.as_deref() {
            Some(s) if !s.is_empty() => Some(parse_timestamp(s)?),
            _ => None,
        };
        let acc = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Acc {
                values: Vec::new(),
                stamps: Vec::new(),
                freq: None,
            }
        });
        acc.values.push(row.value);
        acc.stamps.push(stamp);
        if acc.freq.is_none() {
            acc.freq = row.freq.filter(|s| !s.is_empty());
        }
    }
    if order.is_empty() {
        return Err(SeriesError::EmptySeries);
    }

    order
        .into_iter()
        .map(|id| {
            let acc = groups.remove(&id).expect("group recorded");
            let series = validate_series(acc.values, id, acc.freq)?;
            if acc.stamps.iter().all(Option::is_some) {
                series.with_timestamps(acc.stamps.into_iter().flatten().collect())
            } else if acc.stamps.iter().any(Option::is_some) {
                Err(SeriesError::Csv("timestamp column partially filled".into()))
            } else {
                Ok(series)
            }
        })
        .collect()
}

pub fn read_series_file(path: &Path) -> Result<Vec<TimeSeries>, SeriesError> {
    let file = std::fs::File::open(path).map_err(|e| SeriesError::Csv(format!("{}: {e}", path.display())))?;
    read_series_csv(file)
}
