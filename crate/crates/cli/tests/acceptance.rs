//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails. All tolerances and Monte Carlo sizes are
//! fixed here.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rocp::calibration::{backtest, order_statistic_rank, quantile_of, Scheme};
use rocp::lab::{
    generate, ols_hc1, scaling_regression, ProcessKind, ProcessSpec, RegressionResult, ScalingRow, SigmaPath,
};
use rocp::metrics::{coverage, evaluate, local_coverage, winkler};
use rocp::models::ModelSpec;
use rocp::rolling::{rolling_scores, RollingConfig};
use rocp::selection::{make_grid, select_window};
use rocp::series::{PredictionInterval, ScoreRecord, SplitSpec};
use rocp::theory::{
    coverage_bound, coverage_bound_minimizer, theoretical_window, tradeoff_curve, tradeoff_minimizer, BoundParams,
    Regime,
};

const ALPHA: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pairs(scores: &[ScoreRecord], scheme: Scheme, start: usize) -> Vec<(f64, PredictionInterval)> {
    backtest(scores, scheme, ALPHA, start)
        .unwrap()
        .iter()
        .map(|s| s.as_pair(ALPHA))
        .collect()
}

// 1. Exchangeable scores: P(S_test <= q) = ceil(0.9 m) / (m + 1).
fn c1() -> Outcome {
    const DRAWS: usize = 200_000;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, m) in [20usize, 100, 500].into_iter().enumerate() {
        let mut r = rng(1000 + i as u64);
        let mut buf = vec![0.0; m];
        let mut hits = 0usize;
        for _ in 0..DRAWS {
            for v in buf.iter_mut() {
                *v = r.sample(StandardNormal);
            }
            let q = quantile_of(&buf, 1.0 - ALPHA);
            let test: f64 = r.sample(StandardNormal);
            hits += (test <= q) as usize;
        }
        let p = ((0.9 * m as f64) - 1e-9).ceil() / (m + 1) as f64;
        assert_eq!(order_statistic_rank(0.9, m) as f64 / (m + 1) as f64, p);
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        let got = hits as f64 / DRAWS as f64;
        let z = (got - p) / se;
        ok &= z.abs() <= 3.0;
        lines.push(format!("m={m}: {got:.4} vs {p:.4} (z={z:+.2})"));
    }
    outcome(ok, lines.join("; "))
}

// 2. AR(1) with an AR forecaster: rolling coverage near 0.90.
fn c2() -> Outcome {
    const T: usize = 3000;
    let m = (T as f64).powf(2.0 / 3.0).round() as usize;
    let spec = ModelSpec::ar(12);
    let covs: Vec<f64> = (0..20u64)
        .map(|seed| {
            let y = generate(&ProcessSpec {
                kind: ProcessKind::Ar1 { phi: 0.6, sigma: 1.0 },
                t: T,
                seed: 200 + seed,
            })
            .unwrap();
            let run = rolling_scores(&y, &spec, &RollingConfig::for_model(&spec, 1), seed).unwrap();
            coverage(&pairs(&run.scores, Scheme::Rolling { m }, 0)).unwrap()
        })
        .collect();
    let mean = covs.iter().sum::<f64>() / covs.len() as f64;
    outcome(
        (mean - 0.9).abs() <= 0.02,
        format!("m={m}, mean tail coverage {mean:.4} over 20 seeds (target 0.90 ± 0.02)"),
    )
}

// 3. Linear drift over the last T/2 points: rolling beats full history.
fn c3() -> Outcome {
    const T: usize = 2000;
    const DELTA: f64 = 2.0;
    let m = (T as f64).powf(2.0 / 3.0).round() as usize;
    let spec = ModelSpec::mean();
    let mut cov_wins = 0;
    let (mut w_roll, mut w_full) = (0.0, 0.0);
    for seed in 0..20u64 {
        let y = generate(&ProcessSpec {
            kind: ProcessKind::HolderDrift {
                m_bump: T / 2,
                delta: DELTA,
                beta_h: 1.0,
                base_sigma: 1.0,
            },
            t: T,
            seed: 300 + seed,
        })
        .unwrap();
        let run = rolling_scores(&y, &spec, &RollingConfig::for_model(&spec, 1), seed).unwrap();
        // evaluate over the drift segment
        let roll = evaluate(&pairs(&run.scores, Scheme::Rolling { m }, T / 2), ALPHA, 50).unwrap();
        let full = evaluate(&pairs(&run.scores, Scheme::Full, T / 2), ALPHA, 50).unwrap();
        cov_wins += ((full.coverage - 0.9).abs() > (roll.coverage - 0.9).abs()) as usize;
        w_roll += roll.mean_winkler / 20.0;
        w_full += full.mean_winkler / 20.0;
    }
    outcome(
        cov_wins >= 16 && w_roll < w_full,
        format!(
            "full-history coverage error larger in {cov_wins}/20 seeds (need 16); mean Winkler rolling {w_roll:.3} vs full {w_full:.3}"
        ),
    )
}

fn rocp_bin() -> &'static str {
    env!("CARGO_BIN_EXE_rocp")
}

fn run_cli(args: &[&str], out: &Path) -> std::process::Output {
    let o = Command::new(rocp_bin())
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("ROCP_SEED")
        .output()
        .expect("spawn rocp");
    if !o.status.success() {
        panic!("rocp {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

const SCALING_CONFIG: &str = r#"{
  "name": "drift-scaling",
  "t_grid": [300, 600, 1200, 2400, 4800],
  "n_reps": 10,
  "seed": 1,
  "alpha": 0.1,
  "h": 1,
  "model": {"kind": "mean"},
  "split": {"calibration_fraction": 0.6, "validation_fraction": 0.4},
  "groups": [{"freq": "drift", "family": "calibrated_drift", "strength": 5.0, "beta": 1.0}],
  "exclude_boundary": true
}"#;

// 4. Window scaling law through the CLI experiment runner.
fn c4() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scaling.json");
    std::fs::write(&cfg, SCALING_CONFIG).unwrap();
    let out = dir.path().join("out");
    run_cli(&["experiment", "--config", cfg.to_str().unwrap(), "--jobs", "4"], &out);
    let fit: RegressionResult =
        serde_json::from_str(&std::fs::read_to_string(out.join("regression.json")).unwrap()).unwrap();
    let (lo, hi) = fit.ci95;
    let pass = lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi && (0.45..=0.90).contains(&fit.slope);
    outcome(
        pass,
        format!(
            "slope {:.3} (HC1 se {:.3}), 95% CI [{lo:.3}, {hi:.3}], n={} ({} boundary rows excluded)",
            fit.slope, fit.slope_se_hc1, fit.n, fit.excluded_boundary
        ),
    )
}

// 5. Pure-scale GARCH: scaled scores favour long windows, raw ones do not.
fn c5() -> Outcome {
    const T: usize = 3000;
    let spec = ModelSpec::arma_garch();
    let grid = make_grid(T, 1.0, 30, 0.1, 4.0).unwrap();
    let c = grid.candidates();
    // "near the upper boundary": the top quarter of the grid
    let near_top = c[c.len() * 3 / 4];
    let (mut vs_high, mut plain_smaller, mut vs_better) = (0, 0, 0);
    for seed in 0..20u64 {
        let y = generate(&ProcessSpec {
            kind: ProcessKind::PureScale {
                sigma: SigmaPath::Garch {
                    omega: 0.05,
                    alpha: 0.1,
                    beta: 0.85,
                },
            },
            t: T,
            seed: 500 + seed,
        })
        .unwrap();
        let cfg = RollingConfig {
            horizon: 1,
            min_train: 100,
            refit_stride: 250,
            scale_scores: true,
        };
        let run = rolling_scores(&y, &spec, &cfg, seed).unwrap();
        let plain = select_window(&run.scores, &grid, ALPHA, SplitSpec::default(), false).unwrap();
        let vs = select_window(&run.scores, &grid, ALPHA, SplitSpec::default(), true).unwrap();
        vs_high += (vs.m_hat >= near_top) as usize;
        plain_smaller += (plain.m_hat < vs.m_hat) as usize;
        vs_better += (vs.best().mean_winkler.unwrap() <= plain.best().mean_winkler.unwrap()) as usize;
    }
    outcome(
        vs_high >= 14 && plain_smaller >= 14 && vs_better >= 14,
        format!(
            "VS m̂ >= {near_top} (top quarter of grid) in {vs_high}/20; plain m̂ < VS m̂ in {plain_smaller}/20; VS Winkler <= plain in {vs_better}/20 (need 14 each)"
        ),
    )
}

// 6. Closed forms: table anchors and minimisers against brute-force scans.
fn c6() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (t, want) in [(471, 60.5), (517, 64.4), (6216, 338.1), (6451, 346.5), (7333, 377.4)] {
        let got = theoretical_window(t, 1.0, Regime::ShortMemory).unwrap();
        worst = worst.max((got - want).abs());
        ok &= (got - want).abs() <= 0.1;
    }
    let mut r = rng(6);
    let mut max_gap_trade = 0usize;
    let mut max_gap_bound = 0usize;
    for _ in 0..10 {
        let t = r.random_range(500..20_000usize);
        let beta = r.random_range(0.5..2.0);
        let gamma = r.random_range(0.2..3.0);
        let l = r.random_range(0.5..5.0);
        let scan = (1..=t)
            .min_by(|&a, &b| tradeoff_curve(a, t, beta, gamma, l).total_cmp(&tradeoff_curve(b, t, beta, gamma, l)))
            .unwrap();
        let star = tradeoff_minimizer(t, beta, gamma, l).unwrap().clamp(1.0, t as f64);
        let gap = (scan as f64 - star).abs().ceil() as usize;
        max_gap_trade = max_gap_trade.max(gap);

        let f_under = r.random_range(0.2..1.0);
        let p = BoundParams {
            f_under,
            f_bar: f_under * r.random_range(1.0..3.0),
            a_inf: r.random_range(0.0..2.0),
            l,
            c_star: r.random_range(0.1..2.0),
            r_t: r.random_range(0.0..0.01),
            eta_t: r.random_range(0.0..0.01),
        };
        let scan = (3..=t)
            .min_by(|&a, &b| {
                coverage_bound(a, t, beta, &p)
                    .unwrap()
                    .total_cmp(&coverage_bound(b, t, beta, &p).unwrap())
            })
            .unwrap();
        let m = coverage_bound_minimizer(t, beta, &p).unwrap();
        max_gap_bound = max_gap_bound.max(m.abs_diff(scan));
    }
    ok &= max_gap_trade <= 1 && max_gap_bound <= 1;
    outcome(
        ok,
        format!(
            "anchors max error {worst:.3} (tol 0.1); trade-off stationary point vs scan max gap {max_gap_trade}; bound minimiser vs scan max gap {max_gap_bound} (tol 1)"
        ),
    )
}

// 7. Quantile and Winkler invariants, exhaustively on random small sets.
fn c7() -> Outcome {
    let mut r = rng(7);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let m = r.random_range(1..=25usize);
        // small integer-valued scores force ties
        let scores: Vec<f64> = (0..m).map(|_| r.random_range(0..8u32) as f64 * 0.5).collect();
        let level = r.random_range(0.01..1.0);
        let q = quantile_of(&scores, level);
        // inf { x : F_m(x) >= level }, scanning the distinct candidate values
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let brute = sorted
            .iter()
            .copied()
            .find(|&x| scores.iter().filter(|&&s| s <= x).count() as f64 / m as f64 >= level)
            .unwrap();
        if q != brute {
            failures.push(format!("inf-definition case {case}"));
        }
        // monotone in level
        let level2 = (level + r.random_range(0.0..0.5)).min(1.0);
        if quantile_of(&scores, level2) < q {
            failures.push(format!("monotonicity case {case}"));
        }
        // scale equivariance
        let c = r.random_range(0.1..10.0);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        if (quantile_of(&scaled, level) - c * q).abs() > 1e-12 * (1.0 + c * q) {
            failures.push(format!("equivariance case {case}"));
        }
        // adding a score above every other cannot lower the quantile
        let mut more = scores.clone();
        more.push(sorted[m - 1] + 1.0);
        if quantile_of(&more, level) < q {
            failures.push(format!("append case {case}"));
        }
        // Winkler vs width
        let y = r.random_range(-5.0..5.0);
        let iv = PredictionInterval::symmetric(r.random_range(-2.0..2.0), q, 1.0 - ALPHA);
        let w = winkler(y, &iv, ALPHA);
        if w < iv.width() || (w == iv.width()) != iv.contains(y) {
            failures.push(format!("winkler case {case}"));
        }
    }
    // coverage equals the single full-length local-coverage mean
    for case in 0..200 {
        let n = r.random_range(1..100usize);
        let ps: Vec<(f64, PredictionInterval)> = (0..n)
            .map(|_| (r.random_range(-2.0..2.0), PredictionInterval::symmetric(0.0, 1.0, 0.9)))
            .collect();
        let hits: Vec<bool> = ps.iter().map(|(y, iv)| iv.contains(*y)).collect();
        let (means, _) = local_coverage(&hits, n).unwrap();
        if (coverage(&ps).unwrap() - means[0]).abs() > 1e-12 {
            failures.push(format!("local coverage case {case}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "1000 quantile/Winkler cases and 200 coverage cases conform".into()
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    )
}

/// Gauss–Jordan inverse with partial pivoting on plain vectors.
fn gj_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| (i == j) as u8 as f64));
            r
        })
        .collect();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for row in 0..k {
            if row != col {
                let f = aug[row][col];
                let pivot_row = aug[col].clone();
                for (v, p) in aug[row].iter_mut().zip(pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    aug.into_iter().map(|r| r[k..].to_vec()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

// 8. HC1 against an independent sandwich computation.
fn c8() -> Outcome {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = r.random_range(2..=4usize);
        let n = r.random_range(k + 2..=15usize);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut row = vec![1.0];
                row.extend((1..k).map(|_| r.sample::<f64, _>(StandardNormal)));
                row
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| row.iter().sum::<f64>() + r.sample::<f64, _>(StandardNormal) * (1.0 + row[1].abs()))
            .collect();
        let xt = transpose(&x);
        let xtx_inv = gj_inverse(&matmul(&xt, &x));
        let xty = matmul(&xt, &y.iter().map(|v| vec![*v]).collect::<Vec<_>>());
        let b = matmul(&xtx_inv, &xty);
        let e: Vec<f64> = (0..n)
            .map(|i| y[i] - (0..k).map(|j| x[i][j] * b[j][0]).sum::<f64>())
            .collect();
        let meat: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|c| (0..n).map(|i| e[i] * e[i] * x[i][a] * x[i][c]).sum())
                    .collect()
            })
            .collect();
        let cov = matmul(&matmul(&xtx_inv, &meat), &xtx_inv);
        let scale = n as f64 / (n - k) as f64;

        let fit = ols_hc1(&DMatrix::from_fn(n, k, |i, j| x[i][j]), &DVector::from_vec(y.clone())).unwrap();
        for a in 0..k {
            let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
            worst = worst.max(rel(fit.coefficients[a], b[a][0]));
            for c in 0..k {
                worst = worst.max(rel(fit.cov[(a, c)], cov[a][c] * scale));
            }
        }
    }
    let planted: Vec<ScalingRow> = [10usize, 20, 30, 40]
        .iter()
        .map(|&c| ScalingRow {
            series_id: format!("p{c}"),
            freq: "planted".into(),
            t: c * c * c,
            m_star: c * c,
            at_boundary: false,
            coverage: 0.9,
            mean_winkler: 0.0,
        })
        .collect();
    let slope = scaling_regression(&planted, false, true).unwrap().slope;
    outcome(
        worst <= 1e-10 && (slope - 2.0 / 3.0).abs() <= 1e-9,
        format!("max relative error {worst:.2e} over 50 designs (tol 1e-10); planted slope {slope:.12}"),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

// 9. Every command is byte-for-byte reproducible, also under --jobs 4.
fn c9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let series = generate(&ProcessSpec {
        kind: ProcessKind::PureScale {
            sigma: SigmaPath::Garch {
                omega: 0.05,
                alpha: 0.1,
                beta: 0.85,
            },
        },
        t: 400,
        seed: 9,
    })
    .unwrap();
    let mut csv = String::from("value\n");
    for v in series.values() {
        csv.push_str(&format!("{v}\n"));
    }
    let input = d.join("series.csv");
    std::fs::write(&input, csv).unwrap();
    let input = input.to_str().unwrap();
    let cfg = d.join("exp.json");
    std::fs::write(
        &cfg,
        r#"{"t_grid":[200,400],"n_reps":3,"seed":4,"model":{"kind":"mean"},
            "groups":[{"freq":"a","family":"calibrated_drift","strength":5.0},
                      {"freq":"b","family":"calibrated_drift","strength":3.0}],
            "fixed_effects":true,"exclude_boundary":false}"#,
    )
    .unwrap();
    let scores_dir = d.join("scores-src");
    run_cli(&["scores", "--input", input, "--model", "ar:4"], &scores_dir);
    let scores_csv = scores_dir.join("scores.csv");
    let scores_csv = scores_csv.to_str().unwrap();

    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "scores",
            vec![
                "scores",
                "--input",
                input,
                "--model",
                "arma_garch",
                "--refit-stride",
                "100",
                "--seed",
                "3",
            ],
        ),
        (
            "predict",
            vec![
                "predict",
                "--input",
                input,
                "--model",
                "arma_garch",
                "--refit-stride",
                "100",
                "--scheme",
                "vs:auto",
            ],
        ),
        (
            "evaluate",
            vec!["evaluate", "--input", scores_csv, "--scheme", "rolling:40"],
        ),
        ("select", vec!["select", "--input", scores_csv]),
        ("experiment", vec!["experiment", "--config", cfg.to_str().unwrap()]),
        (
            "bound",
            vec!["bound", "--series-len", "2000", "--l", "2", "--a-inf", "0.3"],
        ),
    ];
    let mut bad = Vec::new();
    for (name, args) in &commands {
        let a = d.join(format!("{name}-a"));
        let b = d.join(format!("{name}-b"));
        let c = d.join(format!("{name}-c"));
        run_cli(args, &a);
        run_cli(args, &b);
        let mut with_jobs = args.clone();
        with_jobs.extend(["--jobs", "4"]);
        run_cli(&with_jobs, &c);
        let (fa, fb, fc) = (dir_bytes(&a), dir_bytes(&b), dir_bytes(&c));
        if fa.is_empty() || fa != fb || fa != fc {
            bad.push(*name);
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} commands x 3 runs (one with --jobs 4) byte-identical",
                commands.len()
            )
        } else {
            format!("outputs differ for {bad:?}")
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("exchangeable coverage exactness", c1, Duration::from_secs(30)),
        ("asymptotic coverage on AR(1)", c2, Duration::from_secs(300)),
        ("drift-bias direction", c3, Duration::from_secs(300)),
        ("window scaling law", c4, Duration::from_secs(1200)),
        ("pure-scale volatility scaling", c5, Duration::from_secs(600)),
        ("closed-form conformance", c6, Duration::from_secs(300)),
        ("quantile and Winkler properties", c7, Duration::from_secs(10)),
        ("OLS/HC1 correctness", c8, Duration::from_secs(60)),
        ("CLI determinism", c9, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let pass = res.pass && took <= *limit;
        failed += (!pass) as usize;
        println!(
            "criterion {}: {} [{name}] {} ({:.1}s, limit {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            res.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
