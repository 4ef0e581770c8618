//! Breast-MRI FGT segmentation pipeline.
//!
//! Subcommands: `phantom` (synthetic cohort), `train` (5-fold CV training),
//! `predict` (ensemble inference), `evaluate` / `report` (metrics, stats,
//! figures). Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime
//! failure. Setting `TRABS_DETERMINISTIC=1` pins BLAS to a single thread;
//! all kernels are deterministic for a fixed thread count either way.

mod commands {
    pub mod evaluate;
    pub mod phantom;
    pub mod predict;
    pub mod train;
}
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "trabs", version, about = "Fibroglandular tissue segmentation for breast MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom cohort with ground truth
    Phantom(commands::phantom::PhantomArgs),
    /// Train with five-fold cross-validation
    Train(commands::train::TrainArgs),
    /// Predict FGT masks with a cross-validation ensemble
    Predict(commands::predict::PredictArgs),
    /// Evaluate predictions against ground truth
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Evaluate and render figures (density-DSC scatter, overlays)
    Report(commands::evaluate::EvaluateArgs),
}

/// Error carrying the documented exit code.
pub enum ExitKind {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl ExitKind {
    fn code(&self) -> i32 {
        match self {
            ExitKind::Usage(_) => 1,
            ExitKind::Data(_) => 2,
            ExitKind::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            ExitKind::Usage(m) | ExitKind::Data(m) | ExitKind::Runtime(m) => m,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        ExitKind::Usage(msg.into())
    }

    pub fn data(err: impl std::fmt::Display) -> Self {
        ExitKind::Data(err.to_string())
    }
}

fn main() {
    if std::env::var("TRABS_DETERMINISTIC").map(|v| v == "1").unwrap_or(false) {
        trabs_autograd::set_blas_threads(1);
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version print normally; argument errors exit 1
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };

    let result = match &cli.command {
        Command::Phantom(args) => commands::phantom::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Report(args) => {
            let with_figures = commands::evaluate::EvaluateArgs {
                manifest: args.manifest.clone(),
                predictions: args.predictions.clone(),
                out: args.out.clone(),
                compare: args.compare.clone(),
                seed: args.seed,
                figures: true,
            };
            commands::evaluate::run(&with_figures)
        }
    };

    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}
