//! `solitonlab --config run.toml [--validate] [--out DIR] [--threads K] [--seed S]`
//!
//! Exit codes: 0 success, 2 validation failure, 3 runtime failure.

mod config;
mod run;
mod validate;

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use solitonlab::Error;

use crate::config::Config;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "solitonlab", version, about = "Soliton dynamics in slowly varying random potentials")]
struct Args {
    /// Experiment configuration (TOML with dotted keys).
    #[arg(long)]
    config: PathBuf,
    /// Check the configuration and print the report without running.
    #[arg(long)]
    validate: bool,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble experiments.
    #[arg(long)]
    threads: Option<usize>,
    /// Base seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::InvalidInput(_) | Error::AssumptionViolated { .. } | Error::InvalidCovariance(_))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let report = validate::validate(&cfg);
    if args.validate {
        print!("{}", report.render());
        return if report.passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_VALIDATION)
        };
    }
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    if !report.passed() {
        for c in report.failures() {
            eprintln!("error: {} violated: {}", c.name, c.detail);
        }
        return ExitCode::from(EXIT_VALIDATION);
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    match run::run(&cfg, &out, &report) {
        Ok(_) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_validation(&e) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
