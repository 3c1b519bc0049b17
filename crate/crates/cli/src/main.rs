//! `dmidas`: generate data, train, evaluate, forecast, decompose, search and
//! count parameters.
//!
//! Exit status: 0 success, 1 configuration or usage error, 2 data error,
//! 3 training or runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmidas_core::ErrorKind;

use commands::Globals;

#[derive(Parser)]
#[command(name = "dmidas", version, about = "Long-horizon forecasting with pooled, interpolating residual blocks")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensemble members, benchmark cells and trials.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (a file for generate, forecast and decompose).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        /// Named preset (default multifreq-v1).
        #[arg(long)]
        preset: Option<String>,
        /// Synthetic spec file (TOML).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train an ensemble and write checkpoints and histories.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score checkpoints, or train and score every configured model.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Ensemble forecast from the window ending at --end.
    Forecast {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        series: Option<String>,
        #[arg(long)]
        end: Option<usize>,
    },
    /// Export the per-block decomposition of one test window.
    Decompose {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        series: Option<String>,
        /// Index of the test window.
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Random hyperparameter search.
    Search {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Parameter breakdown of the configured model and its generic twin.
    ParamCount,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let g = Globals {
        config: cli.config,
        seed: cli.seed,
        jobs: cli.jobs.max(1),
        out: cli.out,
    };
    let result = match &cli.command {
        Command::Generate { preset, spec } => commands::generate(&g, preset.as_deref(), spec.as_deref()),
        Command::Train { data } => commands::train(&g, data.as_deref()),
        Command::Evaluate { data, checkpoints } => commands::evaluate(&g, data.as_deref(), checkpoints.as_deref()),
        Command::Forecast {
            data,
            checkpoints,
            series,
            end,
        } => commands::forecast(&g, data.as_deref(), checkpoints, series.as_deref(), *end),
        Command::Decompose {
            data,
            checkpoint,
            series,
            window,
        } => commands::decompose(&g, data.as_deref(), checkpoint, series.as_deref(), *window),
        Command::Search { data, budget } => commands::search(&g, data.as_deref(), *budget),
        Command::ParamCount => commands::param_count(&g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Runtime => 3,
            })
        }
    }
}
