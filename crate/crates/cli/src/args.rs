use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "rocp", version, about = "Rolling-origin conformal prediction intervals")]
pub struct Cli {
    /// Root seed for every stochastic step.
    #[arg(long, global = true, env = "ROCP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "rocp-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rolling-origin forecast scores for a series.
    Scores(ScoresArgs),
    /// Conformal interval for the next value of a series.
    Predict(PredictArgs),
    /// Backtest a calibration scheme over a score file.
    Evaluate(EvaluateArgs),
    /// Winkler cross-validation of the calibration window.
    Select(SelectArgs),
    /// Window-scaling experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Tabulate the coverage bound and the noise–bias trade-off.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeriesArgs {
    /// Series CSV (`value` column; optional `timestamp`, `id`, `freq`).
    #[arg(long)]
    pub input: PathBuf,
    /// Series to use when the file holds several ids.
    #[arg(long)]
    pub series_id: Option<String>,
    /// naive | mean | ar | ar:P | arma_garch
    #[arg(long, default_value = "ar")]
    pub model: String,
    /// Forecast horizon.
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    /// First forecast origin (model default when omitted).
    #[arg(long)]
    pub min_train: Option<usize>,
    /// Refit every this many origins.
    #[arg(long, default_value_t = 1)]
    pub refit_stride: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoresArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub series: SeriesArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = rocp::selection::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    #[arg(long, default_value_t = rocp::selection::DEFAULT_GRID_LO)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = rocp::selection::DEFAULT_GRID_HI)]
    pub grid_hi: f64,
    /// Hölder exponent setting the grid anchor `T^{2β/(2β+1)}`.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Fraction of scores held out for validation.
    #[arg(long, default_value_t = 0.4)]
    pub validation_fraction: f64,
    /// flag | error | accept
    #[arg(long, default_value = "flag")]
    pub boundary_policy: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub series: SeriesArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// full | rolling | rolling:M | rolling:auto | vs | vs:M | vs:auto
    #[arg(long, default_value = "rolling:auto")]
    pub scheme: String,
    /// Window for `rolling` / `vs` without an explicit `:M`.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Score CSV (`origin,horizon,score,sigma`) or pairs CSV (`y,lower,upper`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// full | rolling:M | vs:M (score files only)
    #[arg(long, default_value = "full")]
    pub scheme: String,
    #[arg(long)]
    pub m: Option<usize>,
    /// Local-coverage window.
    #[arg(long, default_value_t = rocp::metrics::LOCAL_WINDOW)]
    pub window: usize,
    /// Evaluate only origins at or after this one.
    #[arg(long, default_value_t = 0)]
    pub start_origin: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Score CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Select on volatility-scaled scores.
    #[arg(long)]
    pub scaled: bool,
    /// Series length for the grid anchor (default: last origin + horizon).
    #[arg(long = "series-len")]
    pub series_len: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `alpha` in the config.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Overrides `h`.
    #[arg(long)]
    pub h: Option<usize>,
    /// Overrides `model`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Overrides `n_reps`.
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    /// Series length.
    #[arg(long = "series-len")]
    pub t: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f_under: f64,
    #[arg(long, default_value_t = 0.0)]
    pub a_inf: f64,
    /// Drift modulus.
    #[arg(long, default_value_t = 1.0)]
    pub l: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_star: f64,
    #[arg(long, default_value_t = 0.0)]
    pub r_t: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_t: f64,
    /// Noise constant of the trade-off curve (default: the bound's own,
    /// `(f̄/f̲)·sqrt(1/4 + 8A)`).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Tabulate windows `m-min..=m-max` (default `2..=T`).
    #[arg(long)]
    pub m_min: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Dependence regime for the rate rule: short | boundary | poly:A
    #[arg(long, default_value = "short")]
    pub regime: String,
}
