use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::Tuning;
use vslab::experiments::LossKind;

/// Worst-group error experiments for VS-loss and LA-loss on Gaussian mixtures.
#[derive(Debug, Parser)]
#[command(name = "vslab", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "VSLAB_WORKERS")]
    pub workers: Option<usize>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a training set and write it as delimited text.
    Gen,
    /// Run gradient descent and report the final worst-group error.
    Train(TrainArgs),
    /// Run a parameter sweep and write CSV plus a plot script.
    Sweep(SweepArgs),
    /// Check the structural diagnostics on one seeded instance.
    Verify(VerifyArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Vs,
    La,
    Ce,
}

impl From<LossArg> for LossKind {
    fn from(v: LossArg) -> Self {
        match v {
            LossArg::Vs => LossKind::Vs,
            LossArg::La => LossKind::La,
            LossArg::Ce => LossKind::Ce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Zero,
    /// Random direction scaled to `--init-norm`.
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_enum)]
    pub tuning: Option<Tuning>,
    #[arg(long, value_enum, default_value = "zero")]
    pub init: InitKind,
    /// Norm of a random initialization; `init_radius / sqrt(d)` by default.
    #[arg(long)]
    pub init_norm: Option<f64>,
    /// Fixed step size instead of the automatic one.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Fixed,
    Growing,
    /// Both variants, one subdirectory each, plotted together.
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "fixed")]
    pub variant: Variant,
    /// Imbalance ratio for the fixed variant.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Keep only this loss.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Print the expanded grid without computing anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Fill the wall-time column.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Absolute tolerance of the Q-function fixture check.
    #[arg(long, default_value_t = vslab::risk::Q_FIXTURE_TOLERANCE)]
    pub q_tolerance: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
