//! Batch stress-testing CLI over elliptical return models.
//!
//! Subcommands: `ingest` (prices + sectors -> validated panel cache),
//! `fit` (panel -> model JSON), `stress` (single group pair report),
//! `matrix` (all-pairs measure matrices plus one-vs-rest vectors and
//! cross-measure diagnostics), `synth` (regenerate the bundled synthetic
//! dataset). Every option can come from a TOML config file, an
//! `ELLSTRESS_*` environment variable, or a flag, in increasing order of
//! precedence. Exit codes: 0 success, 2 input error, 3 numerical error,
//! 4 partial failure.

mod commands;
mod config;
mod errors;
mod io;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::errors::AppResult;

#[derive(Parser)]
#[command(name = "ellstress", version, about = "Elliptical stress testing and systemic-risk measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prices CSV (columns: date, one per ticker).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Sectors CSV (columns: ticker,group).
    #[arg(long)]
    sectors: Option<PathBuf>,
    /// Panel cache path (written by ingest, read by fit/stress/matrix).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Model JSON path (written by fit, read by stress/matrix).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantile level in (0, 1).
    #[arg(long)]
    q: Option<f64>,
    /// Distribution: normal or student_t.
    #[arg(long)]
    dist: Option<String>,
    /// Student-t degrees of freedom (omit to estimate from kurtosis).
    #[arg(long)]
    nu: Option<f64>,
    /// Stress policy: empirical-var, parametric-var, uniform:<c>, explicit:<path>.
    #[arg(long = "stress-policy")]
    stress_policy: Option<String>,
    /// Comma list of measures: L,MI,THETA,DELTA,B,TVR,COVAR.
    #[arg(long)]
    measures: Option<String>,
    /// Seed for anything randomized.
    #[arg(long)]
    seed: Option<u64>,
    /// Form of the average-loss stress vector: literal or deviation.
    #[arg(long = "eq-l-form")]
    eq_l_form: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            prices: self.prices.clone(),
            sectors: self.sectors.clone(),
            panel: self.panel.clone(),
            model: self.model.clone(),
            out: self.out.clone(),
            dist: self.dist.clone(),
            nu: self.nu,
            q: self.q,
            stress_policy: self.stress_policy.clone(),
            measures: self.measures.clone(),
            seed: self.seed,
            eq_l_form: self.eq_l_form.clone(),
        }
    }

    fn load(&self) -> AppResult<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate input files, write the panel cache.
    Ingest(CommonArgs),
    /// Fit an elliptical model from the panel cache.
    Fit(CommonArgs),
    /// Report every measure for one stressor/stressed group pair.
    Stress(StressArgs),
    /// Evaluate measure matrices over all ordered group pairs.
    Matrix(CommonArgs),
    /// Regenerate the bundled synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StressArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Group whose variables are stressed (the conditioning set).
    #[arg(long)]
    stressor: String,
    /// Group whose response is measured.
    #[arg(long)]
    stressed: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for prices.csv, sectors.csv, dataset_card.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = synth::DEFAULT_SEED)]
    seed: u64,
}

fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Ingest(args) => commands::ingest::run(&args.load()?),
        Command::Fit(args) => commands::fit::run(&args.load()?),
        Command::Stress(args) => {
            let cfg = args.common.load()?;
            commands::stress::run(&cfg, &args.stressor, &args.stressed)
        }
        Command::Matrix(args) => commands::matrix::run(&args.load()?),
        Command::Synth(args) => {
            synth::write_dataset(&args.out, args.seed)?;
            println!("synthetic dataset written to {}", args.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
