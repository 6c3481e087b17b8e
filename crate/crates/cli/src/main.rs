//! `audiomark`: command-line front-end for the watermark robustness benchmark.
//!
//! Exit codes: 0 success (or detected), 1 not detected (`detect` only),
//! 2 operational error, 3 infeasible calibration.

mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use audiomark_core::{Error, Result, Seed};
use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::Globals;
use crate::config::FileConfig;

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let g = Globals {
        seed: Seed(cli.seed.or(file.seed).unwrap_or(0)),
        jobs: cli.jobs.or(file.jobs),
        file,
    };
    if g.jobs == Some(0) {
        return Err(Error::InvalidConfig("--jobs must be >= 1".into()));
    }
    match cli.command {
        Command::Corpus(a) => commands::corpus(a, &g),
        Command::Embed(a) => commands::embed(a, &g),
        Command::Detect(a) => commands::detect(a, &g),
        Command::Perturb(a) => commands::perturb(a, &g),
        Command::Calibrate(a) => commands::calibrate(a, &g),
        Command::Bench(a) => commands::bench(a, &g),
        Command::Attack(a) => commands::attack(a, &g),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Error::CalibrationInfeasible { curve }) => {
            let best = curve
                .points
                .iter()
                .min_by(|a, b| a.fnr.max(a.fpr).total_cmp(&b.fnr.max(b.fpr)));
            match best {
                Some(p) => eprintln!(
                    "error: no threshold reaches FNR and FPR below 1% (best: tau={} fnr={} fpr={})",
                    p.tau, p.fnr, p.fpr
                ),
                None => eprintln!("error: no threshold reaches FNR and FPR below 1%"),
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
