//! `featlab`: run, compare and validate feature-learning experiments.
//!
//! Exit codes: 0 success, 1 I/O or failed check, 2 config error,
//! 3 numeric abort, 4 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featlab::harness::{
    gradcheck, lemma1_check, parse_modes, parse_seeds, preset, preset_names, run_experiment, RunConfig,
    ValidationReport, PAPER_DESK,
};
use featlab::trainer::TrainMode;
use featlab::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_USAGE: u8 = 4;

/// Gradient-check tolerance on the maximum relative error.
const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "featlab", version, about = "Feature learning under data augmentation on synthetic multi-view data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one or more modes over a list of seeds.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// vanilla, a1, a2, a3, mixup, cutmix, a comma-separated list, or compare.
        #[arg(long, default_value = "vanilla")]
        mode: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run vanilla, a1, a2 and a3 on shared data and initializations.
    Compare {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check every named constraint of a config.
    Validate {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Compare the analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the soft-label Mixup loss with its hard-label reformulation.
    Lemma1check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
}

#[derive(Args)]
struct ConfigSource {
    /// JSON run config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config; `paper-desk` is used when neither flag is given.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Seeds as `7`, `0,3,5` or `0..5`; defaults to the config's seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Core(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn load(source: &ConfigSource) -> Result<RunConfig, Failure> {
    match (&source.config, &source.preset) {
        (Some(path), _) => Ok(RunConfig::load(path)?),
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Failure::Usage(format!("unknown preset `{name}`; available: {}", preset_names().join(", ")))
        }),
        (None, None) => Ok(preset(PAPER_DESK).expect("built-in preset")),
    }
}

fn run(source: &ConfigSource, modes: &[TrainMode], args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(source)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s).ok_or_else(|| Failure::Usage(format!("cannot parse seeds `{s}`")))?,
        None => vec![cfg.experiment.seed],
    };
    let manifest = run_experiment(&cfg, modes, &seeds, &args.out)?;
    print!("{}", std::fs::read_to_string(args.out.join(&manifest.summary)).map_err(Error::from)?);
    eprintln!(
        "wrote {} files and manifest.json to {} in {:.1} s",
        manifest.files.len(),
        args.out.display(),
        manifest.total_seconds
    );
    Ok(())
}

fn print_validation(report: &ValidationReport) {
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { source, mode, run: args } => {
            let modes = parse_modes(&mode).ok_or_else(|| Failure::Usage(format!("unknown mode `{mode}`")))?;
            run(&source, &modes, &args)
        }
        Command::Compare { source, run: args } => run(&source, &parse_modes("compare").expect("compare"), &args),
        Command::Validate { source } => {
            let report = ValidationReport {
                checks: load(&source)?.checks(),
            };
            print_validation(&report);
            match report.failures().first() {
                Some(c) => Err(Failure::Core(Error::Config {
                    constraint: c.name.clone(),
                    detail: c.detail.clone(),
                })),
                None => Ok(()),
            }
        }
        Command::Gradcheck { seed } => {
            let r = gradcheck(seed)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
            if r.max_relative_error <= GRADCHECK_TOL {
                Ok(())
            } else {
                Err(Failure::Check(format!(
                    "max relative error {:.3e} exceeds {GRADCHECK_TOL:e}",
                    r.max_relative_error
                )))
            }
        }
        Command::Lemma1check { seed, draws, alpha } => {
            let r = lemma1_check(seed, draws, alpha, 1000)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
            if r.passed() {
                Ok(())
            } else {
                Err(Failure::Check(format!(
                    "|direct - reformulated| = {:.3e} exceeds {:.3e}",
                    r.difference, r.tolerance
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                Error::NonFinite { .. } | Error::Aborted { .. } => EXIT_NUMERIC,
                _ => EXIT_FAILURE,
            })
        }
    }
}
