//! Command surface of the `fptn` binary.
//!
//! Exit codes: 0 success, 1 failed check or runtime failure, 2 bad input or
//! configuration.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fptn", version, about = "Sensor-tokenized Transformer traffic forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV or binary series and write it in binary form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// csv or binary; inferred from the extension by default.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train from a run config; prints the test metrics as JSON.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Use the full protocol (400 epochs, batch 64, patience 40, T=K=12)
        /// and compare against the published numbers.
        #[arg(long)]
        full: bool,
    },
    /// Metrics of a checkpoint on one split of a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// One sensor's forecast curve as CSV (timestamp, ground_truth, prediction).
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        sensor: usize,
        /// Number of consecutive steps to emit.
        #[arg(long, default_value_t = 288)]
        window: usize,
        /// First window within the split.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Forecast step (1..=K) plotted for every row.
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long, default_value = "test")]
        split: String,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient on a tiny model.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Perturb the analytic gradient of one parameter group.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Grid search over d_model, L, h and lr.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
    /// The six time/positional embedding variants.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config's model seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Generate a synthetic daily-cycle dataset.
    Synth {
        /// two-phase or diverse.
        #[arg(long, default_value = "two-phase")]
        preset: String,
        #[arg(long, default_value_t = 8)]
        sensors: usize,
        #[arg(long, default_value_t = 288 * 14)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weekend amplitude multiplier (overrides the preset).
        #[arg(long)]
        weekend_scale: Option<f64>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Print the JSON Schema of the run config.
    Schema,
}

/// `FPTN_DETERMINISTIC=1` forces single-threaded kernels.
pub fn apply_environment() {
    if std::env::var("FPTN_DETERMINISTIC").map_or(false, |v| v == "1") {
        fptn::set_deterministic(true);
    }
}

/// Run one parsed command; machine-readable output goes to `out`, progress to stderr.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    use commands::*;
    match cli.command {
        Command::Ingest { input, format, output } => ingest::run(&input, format.as_deref(), &output, out),
        Command::Train { config, full } => train::run(&config, full, out),
        Command::Evaluate { checkpoint, dataset, format, split } => {
            evaluate::run(&checkpoint, &dataset, format.as_deref(), &split, out)
        }
        Command::Predict {
            checkpoint,
            dataset,
            format,
            sensor,
            window,
            start,
            horizon,
            split,
            output,
        } => predict::run(
            &predict::PredictArgs {
                checkpoint,
                dataset,
                format,
                sensor,
                window,
                start,
                horizon,
                split,
                output,
            },
            out,
        ),
        Command::Gradcheck { config, corrupt } => gradcheck::run(config.as_deref(), corrupt.as_deref(), out),
        Command::Sweep { config, grid } => sweep::run(&config, &grid, out),
        Command::Ablation { config, seeds } => ablation::run(&config, &seeds, out),
        Command::Synth {
            preset,
            sensors,
            steps,
            noise,
            seed,
            weekend_scale,
            output,
            format,
        } => synth::run(&preset, sensors, steps, noise, seed, weekend_scale, &output, format.as_deref(), out),
        Command::Schema => {
            out.write_all(config::run_config_schema().as_bytes())?;
            Ok(())
        }
    }
}
