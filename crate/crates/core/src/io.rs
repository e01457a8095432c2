//! Text formats shared by the library and the CLI.

use std::io::{Read, Write};

use crate::series::ScoreRecord;

/// Formats a float with 17 significant digits, enough for an exact
/// round-trip through any IEEE-754 double parser.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub const SCORE_HEADER: &str = "origin,horizon,score,sigma";

/// Writes the score dump: `origin,horizon,score,sigma`, sigma empty when
/// absent.
pub fn write_scores<W: Write>(mut w: W, scores: &[ScoreRecord]) -> std::io::Result<()> {
    writeln!(w, "{SCORE_HEADER}")?;
    for r in scores {
        let sigma = r.sigma.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.origin, r.horizon, fmt_f64(r.score), sigma)?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreCsvError {
    #[error("score csv: {0}")]
    Parse(String),
    #[error("score csv row {row}: {msg}")]
    Invalid { row: usize, msg: String },
}

/// Reads a score dump. Rows must have strictly increasing origins, a single
/// horizon, nonnegative scores and positive sigmas.
pub fn read_scores<R: Read>(r: R) -> Result<Vec<ScoreRecord>, ScoreCsvError> {
    #[derive(serde::Deserialize)]
    struct Row {
        origin: usize,
        horizon: usize,
        score: f64,
        sigma: Option<f64>,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out: Vec<ScoreRecord> = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| ScoreCsvError::Parse(e.to_string()))?;
        let bad = |msg: &str| ScoreCsvError::Invalid {
            row: i + 1,
            msg: msg.to_string(),
        };
        if !(row.score.is_finite() && row.score >= 0.0) {
            return Err(bad("score must be finite and nonnegative"));
        }
        if row.sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(bad("sigma must be positive"));
        }
        if row.horizon == 0 || row.origin == 0 {
            return Err(bad("origin and horizon are 1-based"));
        }
        if let Some(prev) = out.last() {
            if row.origin <= prev.origin {
                return Err(bad("origins must be strictly increasing"));
            }
            if row.horizon != prev.horizon {
                return Err(bad("mixed horizons in one file"));
            }
        }
        out.push(ScoreRecord::new(row.origin, row.horizon, row.score, row.sigma));
    }
    Ok(out)
}
