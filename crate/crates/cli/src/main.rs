//! `rocp`: rolling-origin conformal prediction from the command line.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime or
//! numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use output::{invalid, CmdResult, OutDir};

fn run(cli: Cli, seed_given: bool) -> CmdResult {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
    }
    let out = OutDir::create(&cli.out_dir)?;
    let seed = cli.seed;
    match &cli.command {
        Command::Scores(a) => commands::scores(a, seed, &out),
        Command::Predict(a) => commands::predict(a, seed, &out),
        Command::Evaluate(a) => commands::evaluate_cmd(a, seed, &out),
        Command::Select(a) => commands::select(a, seed, &out),
        Command::Experiment(a) => commands::experiment(a, seed_given.then_some(seed), &out),
        Command::Bound(a) => commands::bound(a, seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    // the experiment config carries its own seed unless one is passed explicitly
    let seed_given = matches
        .value_source("seed")
        .is_some_and(|s| s != ValueSource::DefaultValue);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli, seed_given) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
