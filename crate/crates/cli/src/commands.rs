use std::path::Path;

use rocp::calibration::{backtest, rocp_interval, scale_window, take_window, vs_rocp_interval, Scheme};
use rocp::io::{fmt_f64, read_scores, write_scores};
use rocp::lab::{
    fit_lines_csv, run_scaling_experiment, scaling_regression, scaling_rows_csv, scatter_csv, ExperimentConfig,
};
use rocp::metrics::{evaluate, local_coverage, EVAL_HEADER};
use rocp::models::ModelSpec;
use rocp::rolling::{rolling_scores, RollingConfig, RollingRun};
use rocp::selection::{make_grid, select_window, Boundary, BoundaryPolicy, SelectionResult};
use rocp::series::{read_series_file, PredictionInterval, ScoreRecord, SplitSpec, TimeSeries};
use rocp::theory::{coverage_bound_terms, theoretical_window, tradeoff_curve, tradeoff_minimizer, BoundParams, Regime};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::output::{invalid, runtime, Classify, CmdResult, OutDir};

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("input file not found: {}", path.display())))
    }
}

fn load_series(a: &SeriesArgs) -> CmdResult<TimeSeries> {
    require_file(&a.input)?;
    let mut all = read_series_file(&a.input).invalid()?;
    match &a.series_id {
        Some(id) => all
            .into_iter()
            .find(|s| s.id() == Some(id.as_str()))
            .ok_or_else(|| invalid(format!("no series with id {id:?} in {}", a.input.display()))),
        None if all.len() == 1 => Ok(all.remove(0)),
        None => Err(invalid(format!(
            "{} holds {} series; pick one with --series-id",
            a.input.display(),
            all.len()
        ))),
    }
}

fn model(a: &SeriesArgs) -> CmdResult<ModelSpec> {
    ModelSpec::parse(&a.model).invalid()
}

fn run_rolling(a: &SeriesArgs, spec: &ModelSpec, series: &TimeSeries, seed: u64, scale: bool) -> CmdResult<RollingRun> {
    let cfg = RollingConfig {
        horizon: a.h,
        min_train: a.min_train.unwrap_or_else(|| spec.default_min_train()),
        refit_stride: a.refit_stride,
        scale_scores: scale,
    };
    cfg.validate().invalid()?;
    if series.len() < cfg.min_train + cfg.horizon {
        return Err(invalid(format!(
            "series has {} points; needs at least min_train + h = {}",
            series.len(),
            cfg.min_train + cfg.horizon
        )));
    }
    rolling_scores(series, spec, &cfg, seed).runtime()
}

fn scores_csv(scores: &[ScoreRecord]) -> CmdResult<String> {
    let mut buf = Vec::new();
    write_scores(&mut buf, scores).runtime()?;
    String::from_utf8(buf).runtime()
}

fn echo_config<T: Serialize>(out: &OutDir, command: &str, seed: u64, args: &T) -> CmdResult {
    out.write_json(
        "config.json",
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "args": args,
        }),
    )
}

fn check_alpha(alpha: f64) -> CmdResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn scores(a: &ScoresArgs, seed: u64, out: &OutDir) -> CmdResult {
    let spec = model(&a.series)?;
    let series = load_series(&a.series)?;
    let run = run_rolling(&a.series, &spec, &series, seed, spec.provides_volatility())?;
    if !run.failed_origins.is_empty() {
        log::warn!("{} origins dropped after fit failures", run.failed_origins.len());
    }
    echo_config(out, "scores", seed, a)?;
    out.write("scores.csv", &scores_csv(&run.scores)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Window {
    Full,
    Fixed(usize),
    Auto,
}

/// `(scaled, window)` from the scheme string.
fn parse_scheme(s: &str, m: Option<usize>, allow_auto: bool) -> CmdResult<(bool, Window)> {
    let (base, arg) = match s.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (s, None),
    };
    let scaled = match base {
        "full" if arg.is_none() => return Ok((false, Window::Full)),
        "rolling" => false,
        "vs" => true,
        _ => return Err(invalid(format!("unknown scheme {s:?}"))),
    };
    let window = match arg {
        Some("auto") if allow_auto => Window::Auto,
        Some("auto") => return Err(invalid("auto windows are chosen by `select`; pass an explicit m")),
        Some(v) => Window::Fixed(
            v.parse()
                .ok()
                .filter(|&m| m >= 1)
                .ok_or_else(|| invalid(format!("bad window in {s:?}")))?,
        ),
        None => Window::Fixed(m.ok_or_else(|| invalid(format!("scheme {s:?} needs --m or an explicit :M")))?),
    };
    Ok((scaled, window))
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::No => "no",
        Boundary::Lower => "lower",
        Boundary::Upper => "upper",
    }
}

fn grid_select(g: &GridArgs, t: usize, scores: &[ScoreRecord], alpha: f64, scaled: bool) -> CmdResult<SelectionResult> {
    let policy: BoundaryPolicy = g.boundary_policy.parse().map_err(invalid)?;
    let split = SplitSpec::new(1.0 - g.validation_fraction, g.validation_fraction).invalid()?;
    let grid = make_grid(t, g.beta, g.grid_points, g.grid_lo, g.grid_hi).invalid()?;
    let res = select_window(scores, &grid, alpha, split, scaled).runtime()?;
    policy.apply(res).runtime()
}

pub fn predict(a: &PredictArgs, seed: u64, out: &OutDir) -> CmdResult {
    check_alpha(a.alpha)?;
    let spec = model(&a.series)?;
    let (mut scaled, window) = parse_scheme(&a.scheme, a.m, true)?;
    if scaled && !spec.provides_volatility() {
        log::warn!(
            "model {:?} has no volatility forecast; falling back to the rolling scheme",
            a.series.model
        );
        scaled = false;
    }
    let series = load_series(&a.series)?;
    let run = run_rolling(&a.series, &spec, &series, seed, scaled)?;
    let scores = &run.scores;

    let mut boundary = None;
    let m = match window {
        Window::Full => scores.len(),
        Window::Fixed(m) => {
            if m > scores.len() {
                return Err(invalid(format!(
                    "window {m} exceeds the {} available scores",
                    scores.len()
                )));
            }
            m
        }
        Window::Auto => {
            let sel = grid_select(&a.grid, series.len(), scores, a.alpha, scaled)?;
            out.write("selection.csv", &sel.to_csv())?;
            boundary = Some(boundary_name(sel.at_boundary));
            sel.m_hat
        }
    };

    let fitted = spec.fit(series.values(), seed).runtime()?;
    let fc = fitted.forecast(series.values(), a.series.h).runtime()?;
    let interval: PredictionInterval = if scaled {
        let sigma = fc.sigma.ok_or_else(|| runtime("volatility forecast missing"))?;
        vs_rocp_interval(fc.center, &scale_window(scores, m).runtime()?, sigma, a.alpha).runtime()?
    } else {
        rocp_interval(fc.center, &take_window(scores, m).runtime()?, a.alpha).runtime()?
    };
    let scheme = match (window, scaled) {
        (Window::Full, _) => "full",
        (_, true) => "vs",
        (_, false) => "rolling",
    };
    echo_config(out, "predict", seed, a)?;
    out.write("scores.csv", &scores_csv(scores)?)?;
    out.write_json(
        "prediction.json",
        &json!({
            "center": interval.center,
            "lower": interval.lower,
            "upper": interval.upper,
            "level": interval.level,
            "sigma": if scaled { fc.sigma } else { None },
            "m_used": m,
            "n_scores": scores.len(),
            "scheme": scheme,
            "requested_scheme": a.scheme,
            "boundary_flag": boundary,
        }),
    )
}

fn read_score_file(path: &Path) -> CmdResult<Vec<ScoreRecord>> {
    require_file(path)?;
    let f = std::fs::File::open(path).invalid()?;
    let scores = read_scores(f).invalid()?;
    if scores.is_empty() {
        return Err(invalid(format!("{} holds no scores", path.display())));
    }
    Ok(scores)
}

fn read_pairs(path: &Path) -> CmdResult<Vec<(f64, PredictionInterval)>> {
    #[derive(serde::Deserialize)]
    struct Row {
        y: f64,
        lower: f64,
        upper: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .invalid()?;
    let mut pairs = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let r = row.invalid()?;
        if !(r.lower <= r.upper) || !r.y.is_finite() {
            return Err(invalid(format!("row {}: need finite y and lower <= upper", i + 1)));
        }
        let c = (r.lower + r.upper) / 2.0;
        pairs.push((
            r.y,
            PredictionInterval {
                center: c,
                lower: r.lower,
                upper: r.upper,
                level: f64::NAN,
            },
        ));
    }
    Ok(pairs)
}

pub fn evaluate_cmd(a: &EvaluateArgs, seed: u64, out: &OutDir) -> CmdResult {
    check_alpha(a.alpha)?;
    require_file(&a.input)?;
    let header = std::fs::read_to_string(&a.input)
        .invalid()?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    let is_pairs = header.split(',').any(|c| c.trim() == "lower");
    let (pairs, scheme_name, m, h) = if is_pairs {
        (read_pairs(&a.input)?, "pairs".to_string(), None, None)
    } else {
        let scores = read_score_file(&a.input)?;
        let (scaled, window) = parse_scheme(&a.scheme, a.m, false)?;
        let scheme = match (window, scaled) {
            (Window::Full, _) => Scheme::Full,
            (Window::Fixed(m), false) => Scheme::Rolling { m },
            (Window::Fixed(m), true) => Scheme::Scaled { m },
            (Window::Auto, _) => unreachable!("rejected by parse_scheme"),
        };
        let steps = backtest(&scores, scheme, a.alpha, a.start_origin).invalid()?;
        let pairs: Vec<_> = steps.iter().map(|s| s.as_pair(a.alpha)).collect();
        (
            pairs,
            scheme.name().to_string(),
            scheme.window(),
            Some(scores[0].horizon),
        )
    };
    if pairs.is_empty() {
        return Err(invalid("nothing to evaluate: no origin has a full calibration window"));
    }
    let report = evaluate(&pairs, a.alpha, a.window).runtime()?;
    echo_config(out, "evaluate", seed, a)?;
    out.write(
        "eval.csv",
        &format!("{EVAL_HEADER}\n{}\n", report.csv_row(&scheme_name, m, h, a.alpha)),
    )?;
    let hits: Vec<bool> = pairs.iter().map(|(y, iv)| iv.contains(*y)).collect();
    let mut lc = String::from("index,local_coverage\n");
    if let Ok((means, _)) = local_coverage(&hits, a.window) {
        for (i, v) in means.iter().enumerate() {
            lc.push_str(&format!("{i},{}\n", fmt_f64(*v)));
        }
    }
    out.write("local_coverage.csv", &lc)
}

pub fn select(a: &SelectArgs, seed: u64, out: &OutDir) -> CmdResult {
    check_alpha(a.alpha)?;
    let scores = read_score_file(&a.input)?;
    let last = scores.last().expect("nonempty");
    let t = a.series_len.unwrap_or(last.origin + last.horizon);
    let res = grid_select(&a.grid, t, &scores, a.alpha, a.scaled)?;
    echo_config(out, "select", seed, a)?;
    out.write("selection.csv", &res.to_csv())?;
    out.write_json("selection.json", &res)
}

pub fn experiment(a: &ExperimentArgs, seed: Option<u64>, out: &OutDir) -> CmdResult {
    require_file(&a.config)?;
    let text = std::fs::read_to_string(&a.config).invalid()?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).invalid()?;
    // flags win over the file
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.h {
        cfg.h = v;
    }
    if let Some(m) = &a.model {
        cfg.model = ModelSpec::parse(m).invalid()?;
    }
    if let Some(v) = a.grid_points {
        cfg.grid.n_points = v;
    }
    if let Some(v) = a.grid_lo {
        cfg.grid.lo = v;
    }
    if let Some(v) = a.grid_hi {
        cfg.grid.hi = v;
    }
    if let Some(v) = a.beta {
        cfg.grid.beta = v;
    }
    if let Some(v) = a.reps {
        cfg.n_reps = v;
    }
    cfg.validate().invalid()?;
    out.write_json("config.json", &cfg)?;

    let res = run_scaling_experiment(&cfg).runtime()?;
    out.write("rows.csv", &scaling_rows_csv(&res.rows))?;
    let mut dropped = String::from("series_id,reason\n");
    for d in &res.dropped {
        dropped.push_str(&format!("{},\"{}\"\n", d.series_id, d.reason.replace('"', "'")));
    }
    out.write("dropped.csv", &dropped)?;
    out.write("scatter.csv", &scatter_csv(&res.rows))?;
    let fit = scaling_regression(&res.rows, cfg.fixed_effects, cfg.exclude_boundary).runtime()?;
    out.write("fit_lines.csv", &fit_lines_csv(&res.rows, &fit))?;
    out.write_json("regression.json", &fit)
}

pub fn bound(a: &BoundArgs, seed: u64, out: &OutDir) -> CmdResult {
    let p = BoundParams {
        f_bar: a.f_bar,
        f_under: a.f_under,
        a_inf: a.a_inf,
        l: a.l,
        c_star: a.c_star,
        r_t: a.r_t,
        eta_t: a.eta_t,
    };
    p.validate().invalid()?;
    let regime: Regime = a.regime.parse().map_err(invalid)?;
    let rate = theoretical_window(a.t, a.beta, regime).invalid()?;
    let (lo, hi) = (a.m_min.unwrap_or(2), a.m_max.unwrap_or(a.t));
    if lo < 2 || hi > a.t || lo > hi {
        return Err(invalid(format!(
            "need 2 <= m-min <= m-max <= T, got {lo}..={hi}, T = {}",
            a.t
        )));
    }
    let gamma = a.gamma.unwrap_or((a.f_bar / a.f_under) * (0.25 + 8.0 * a.a_inf).sqrt());
    let mut table = String::from("m,noise,remainder,drift,estimation,bound,tradeoff\n");
    let mut best_bound = (lo, f64::INFINITY);
    let mut best_trade = (lo, f64::INFINITY);
    for m in lo..=hi {
        let terms = coverage_bound_terms(m, a.t, a.beta, &p).invalid()?;
        let total = terms.total();
        let trade = tradeoff_curve(m, a.t, a.beta, gamma, a.l);
        if total < best_bound.1 {
            best_bound = (m, total);
        }
        if trade < best_trade.1 {
            best_trade = (m, trade);
        }
        table.push_str(&format!(
            "{m},{},{},{},{},{},{}\n",
            fmt_f64(terms.noise),
            fmt_f64(terms.remainder),
            fmt_f64(terms.drift),
            fmt_f64(terms.estimation),
            fmt_f64(total),
            fmt_f64(trade)
        ));
    }
    echo_config(out, "bound", seed, a)?;
    out.write("bound.csv", &table)?;
    out.write_json(
        "bound.json",
        &json!({
            "argmin_bound": best_bound.0,
            "min_bound": best_bound.1,
            "argmin_tradeoff": best_trade.0,
            "min_tradeoff": best_trade.1,
            "tradeoff_stationary_point": tradeoff_minimizer(a.t, a.beta, gamma, a.l),
            "gamma": gamma,
            "theoretical_window": rate,
            "regime": regime,
        }),
    )
}
