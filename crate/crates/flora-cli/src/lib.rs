//! `flora` command-line surface: the pilot experiment, the verification
//! suite, analytical memory reports, and general training sweeps.
//!
//! Every command is deterministic given its flags plus seed. Exit codes:
//! 0 success, 1 verification failure, 2 missing data / environment problems,
//! 64 usage errors.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_ENV: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Env(String),
    Core(flora_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Env(_) => EXIT_ENV,
            CliError::Core(flora_core::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_ENV,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Env(msg) => write!(f, "{msg}"),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Env(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "flora",
    version,
    about = "Sublinear-memory optimizer states via seeded random projections",
    after_help = "CSV schemas:\n  \
        pilot_curves.csv: variant,step,loss,accuracy  (accuracy in percent,\n    \
        refreshed every --eval-every steps and at the end; loss is per step)\n  \
        memreport.csv (memreport): rank,mode,group,param_scalars,state_scalars,\n    \
        adapter_param_scalars,seed_words,compression_ratio\n  \
        memreport.csv (train): group,param_scalars,state_scalars,\n    \
        adapter_param_scalars,seed_words,compression_ratio\n  \
        run_<hash>.csv: '# key=value' config echo lines, then\n    \
        step,loss,accuracy  (single run) or\n    \
        kappa,steps,final_loss,final_accuracy  (one row per kappa in a sweep)\n\n\
        Config files are flat key=value lines (same keys as the long flags,\n  \
        snake_case); precedence is flags > config file > defaults.\n\n\
        Exit codes: 0 success, 1 verification failure, 2 environment/data, 64 usage."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the five-variant pilot experiment and write curves + plot.
    Pilot(PilotArgs),
    /// Run the statistical/algebraic property suite; exit 0 iff all pass.
    Verify(VerifyArgs),
    /// Analytical optimizer-state memory accounting over a rank sweep.
    Memreport(MemreportArgs),
    /// Train with a chosen optimizer mode; supports kappa sweeps.
    Train(TrainArgs),
}

#[derive(Args, Debug, Default)]
pub struct PilotArgs {
    /// Use the synthetic cluster task instead of IDX data.
    #[arg(long)]
    pub synthetic: bool,
    /// Learning rate shared by all variants.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Projection / adapter rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Evaluate accuracy every this many steps.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Comma-separated layer dims, e.g. 784,768,768,10.
    #[arg(long)]
    pub layers: Option<String>,
    /// Index of the weight matrix the variants patch.
    #[arg(long)]
    pub patch_layer: Option<usize>,
    /// Synthetic task: training examples per class.
    #[arg(long)]
    pub train_per_class: Option<usize>,
    /// Synthetic task: evaluation examples per class.
    #[arg(long)]
    pub eval_per_class: Option<usize>,
    /// Directory with IDX files (default: $FLORA_DATA_DIR, then ./data).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct VerifyArgs {
    /// Run a single named check (see --help for names).
    #[arg(long, long_help = format!("Run a single named check. Available: {}", flora_core::verify::CHECK_NAMES.join(", ")))]
    pub only: Option<String>,
    /// Trajectory length override for the dynamics equivalence check.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deliberately sabotage an oracle to demonstrate suite sensitivity
    /// (momentum-no-transfer).
    #[arg(long)]
    pub inject_fault: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct MemreportArgs {
    /// Comma-separated layer dims, e.g. 768,768 for a single square matrix.
    #[arg(long)]
    pub layers: Option<String>,
    /// Comma-separated rank sweep, e.g. 8,32,128,256.
    #[arg(long)]
    pub ranks: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Optimizer mode: sgd, sgd_flora_momentum, sgd_naive_momentum,
    /// accum_flora, accum_naive, lora_adapter.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Accumulation cycle length.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Momentum resampling interval; a comma-separated list sweeps it.
    #[arg(long)]
    pub kappa: Option<String>,
    /// EMA decay.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Adapter mode: freeze the down-projection and train B only.
    #[arg(long)]
    pub freeze_a: bool,
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub eval_per_class: Option<usize>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses and dispatches; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Pilot(args) => commands::cmd_pilot(args),
        Command::Verify(args) => commands::cmd_verify(args),
        Command::Memreport(args) => commands::cmd_memreport(args),
        Command::Train(args) => commands::cmd_train(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
