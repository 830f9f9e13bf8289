//! `mpmoe` — train and inspect mixture-of-experts precipitation blends.
//!
//! Exit codes: 0 success, 2 usage errors (bad flags, missing input paths),
//! 3 data errors (unreadable or malformed files), 4 runtime errors
//! (training or evaluation failures).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpmoe_core::trainer::TrainConfig;

mod artifacts;
mod checkpoint;
mod commands;
mod error;
mod panel_io;
mod schema;
mod spec_io;

#[derive(Parser)]
#[command(
    name = "mpmoe",
    version,
    about = "Gated mixture-of-experts post-processing for precipitation forecasts",
    long_about = "Generates synthetic forecast panels, trains a gating network over \
                  fixed expert forecasts with a blended point-wise/structural loss, \
                  and evaluates, sweeps, and ablates the result. Every run is \
                  reproducible from its persisted config snapshot and seeds."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress notes; tables and reports still print.
    #[arg(long, global = true)]
    quiet: bool,
}

/// Training knobs shared by the train/sweep/ablate subcommands. Defaults
/// are the reference configuration baked into `TrainConfig::default()`.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Blend weight in [0, 1] between the point-wise term (0) and the
    /// structural term (1)
    #[arg(long, default_value_t = TrainConfig::default().lambda)]
    lambda: f64,
    /// Forecast window length, hours
    #[arg(long, default_value_t = TrainConfig::default().m)]
    m: usize,
    /// Max temporal shift the structural distance forgives, hours
    #[arg(long, default_value_t = TrainConfig::default().delta)]
    delta: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    /// Mini-batch size
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    /// Training epochs
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Comma-separated seeds; one independent run per seed
    #[arg(long, value_delimiter = ',', default_values_t = TrainConfig::default().seeds)]
    seeds: Vec<u64>,
    /// Chronological train fraction, strictly between 0 and 1
    #[arg(long, default_value_t = TrainConfig::default().train_fraction)]
    split: f64,
    /// Comma-separated hidden-layer widths of the gating network
    #[arg(long, value_delimiter = ',', default_values_t = TrainConfig::default().hidden_dims)]
    hidden_dims: Vec<usize>,
    /// Feed raw expert values to the gate alongside the features
    #[arg(long)]
    append_experts: bool,
}

impl ConfigArgs {
    fn into_config(self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            m: self.m,
            delta: self.delta,
            lr: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            seeds: self.seeds,
            train_fraction: self.split,
            hidden_dims: self.hidden_dims,
            shuffle: true,
            append_experts: self.append_experts,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic forecast panel CSV
    Gen {
        /// Panel spec: a TOML file, or the literal 'standard' for the
        /// built-in reference panel
        #[arg(long, default_value = "standard")]
        spec: String,
        /// Generator seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the gating network; writes a run directory
    Train {
        /// Input panel CSV
        #[arg(long)]
        data: PathBuf,
        /// Column-mapping TOML for panels with foreign headers
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Run directory to create
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-evaluate a checkpoint on a panel; prints the metrics report
    Eval {
        /// Checkpoint JSON written by train
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input panel CSV
        #[arg(long)]
        data: PathBuf,
        /// Column-mapping TOML for panels with foreign headers
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Also write the report JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train across several blend weights; writes a sweep table
    Sweep {
        /// Input panel CSV
        #[arg(long)]
        data: PathBuf,
        /// Column-mapping TOML for panels with foreign headers
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated blend weights to train
        #[arg(
            long,
            value_delimiter = ',',
            default_values_t = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        )]
        lambdas: Vec<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the configured blend against each single-term endpoint
    Ablate {
        /// Input panel CSV
        #[arg(long)]
        data: PathBuf,
        /// Column-mapping TOML for panels with foreign headers
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dump the precomputed structural-penalty matrix for the train split
    Penalty {
        /// Input panel CSV
        #[arg(long)]
        data: PathBuf,
        /// Column-mapping TOML for panels with foreign headers
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Output CSV path; prints to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Forecast window length, hours
        #[arg(long, default_value_t = TrainConfig::default().m)]
        m: usize,
        /// Max temporal shift the structural distance forgives, hours
        #[arg(long, default_value_t = TrainConfig::default().delta)]
        delta: usize,
        /// Chronological train fraction, strictly between 0 and 1
        #[arg(long, default_value_t = TrainConfig::default().train_fraction)]
        split: f64,
        /// Feed raw expert values to the gate alongside the features
        #[arg(long)]
        append_experts: bool,
    },
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Gen { spec, seed, out } => commands::cmd_gen(&spec, seed, &out, quiet),
        Command::Train { data, schema, out, config } => {
            commands::cmd_train(&data, schema.as_deref(), &out, config.into_config(), quiet)
        }
        Command::Eval { checkpoint, data, schema, out } => {
            commands::cmd_eval(&checkpoint, &data, schema.as_deref(), out.as_deref(), quiet)
        }
        Command::Sweep { data, schema, out, lambdas, config } => {
            commands::cmd_sweep(&data, schema.as_deref(), &out, &lambdas, config.into_config(), quiet)
        }
        Command::Ablate { data, schema, out, config } => {
            commands::cmd_ablate(&data, schema.as_deref(), &out, config.into_config(), quiet)
        }
        Command::Penalty { data, schema, out, m, delta, split, append_experts } => {
            let config = TrainConfig {
                m,
                delta,
                train_fraction: split,
                append_experts,
                ..TrainConfig::default()
            };
            commands::cmd_penalty(&data, schema.as_deref(), out.as_deref(), config, quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
