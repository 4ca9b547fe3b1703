//! Command line front end chaining simulate, masks, train, sample,
//! rollout, evaluate, calibrate, and baseline over shared artifacts.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical.
//! On failure the last stderr line is a single JSON record with the
//! error kind and message; on success stdout ends with a JSON status
//! object listing the written artifacts.

mod artifacts;
mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Sparse-sensor field reconstruction and forecasting with a
/// mask-conditioned diffusion model.
#[derive(Parser)]
#[command(name = "sfd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset container
    Simulate(CommonArgs),
    /// Draw sensor/target mask pairs into a container
    Masks(MasksArgs),
    /// Train the denoiser and write a checkpoint
    Train(TrainArgs),
    /// Conditional ensemble for one held-out instance
    Sample(SampleArgs),
    /// Autoregressive rollouts with per-horizon spread diagnostics
    Rollout(RolloutArgs),
    /// Score a model on the held-out instances
    Evaluate(ModelDataArgs),
    /// Uncertainty calibration report
    Calibrate(ModelDataArgs),
    /// Interpolation baselines, no model required
    Baseline(DataArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON file (overrides --preset)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: toy or ns64
    #[arg(long, default_value = "toy")]
    preset: String,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MasksArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Pattern override: random or blocks
    #[arg(long)]
    pattern: Option<String>,
    /// Sensor density for the random pattern
    #[arg(long)]
    density: Option<f64>,
    /// Fraction of sensors shared by both masks (random pattern)
    #[arg(long)]
    overlap: Option<f64>,
    /// Block count for the blocks pattern
    #[arg(long)]
    blocks: Option<usize>,
    /// Regime override: global or instance
    #[arg(long)]
    regime: Option<String>,
    /// Number of pairs to draw (defaults to eval.instances)
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset container (defaults to <out>/dataset.sfd)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Resume from an existing checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Steps between stderr progress lines
    #[arg(long, default_value_t = 50)]
    log_every: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset container (defaults to <out>/dataset.sfd)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint (defaults to <out>/model.sfck)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Held-out instance id
    #[arg(long, default_value_t = 0)]
    instance: u64,
    /// Ensemble size override
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset container (defaults to <out>/dataset.sfd)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint (defaults to <out>/model.sfck)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of rollout cases
    #[arg(long, default_value_t = 8)]
    cases: usize,
    /// Ensemble size override
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Args)]
struct ModelDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset container (defaults to <out>/dataset.sfd)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint (defaults to <out>/model.sfck)
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset container (defaults to <out>/dataset.sfd)
    #[arg(long)]
    data: Option<PathBuf>,
}

/// The last stderr line is machine-parsable by contract.
fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({"status": "error", "kind": kind, "message": message})
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            eprint!("{rendered}");
            emit_error("usage", rendered.lines().next().unwrap_or("bad arguments"));
            return ExitCode::from(1);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(status) => {
            println!("{status}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (kind, code) = match &err {
                sfd_core::Error::Config(_) => ("usage", 1),
                sfd_core::Error::Data(_) => ("data", 2),
                sfd_core::Error::Numerical(_) => ("numerical", 3),
            };
            emit_error(kind, &err.to_string());
            ExitCode::from(code)
        }
    }
}
