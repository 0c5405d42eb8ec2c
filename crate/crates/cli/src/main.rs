mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{BenchConfig, CalibrateConfig, DetectConfig, RunConfig, SweepConfig, SynthConfig};

/// Beam-curve detector for faint curved edges in noisy images.
///
/// Each run writes its outputs and a config.toml echo into a run directory.
/// `beamcurve --config <run>/config.toml` repeats the run.
#[derive(Parser)]
#[command(name = "beamcurve", version, args_conflicts_with_subcommands = true, arg_required_else_help = true)]
struct Cli {
    /// Replay the config.toml of an earlier run.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for a replayed run.
    #[arg(long, requires = "config")]
    run_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(clap::Args)]
struct RunDir {
    /// Output directory; a fresh one under runs/ when not given.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the test pattern with noise at a given SNR.
    Synth {
        #[command(flatten)]
        cfg: SynthConfig,
        #[command(flatten)]
        out: RunDir,
    },
    /// Detect edges in an image and write the soft edge map.
    Detect {
        #[command(flatten)]
        cfg: DetectConfig,
        #[command(flatten)]
        out: RunDir,
    },
    /// Fit the threshold constant beta on pure-noise images.
    Calibrate {
        #[command(flatten)]
        cfg: CalibrateConfig,
        #[command(flatten)]
        out: RunDir,
    },
    /// F-measure against SNR for each detector.
    Sweep {
        #[command(flatten)]
        cfg: SweepConfig,
        #[command(flatten)]
        out: RunDir,
    },
    /// Run time and operation counts against image size.
    Bench {
        #[command(flatten)]
        cfg: BenchConfig,
        #[command(flatten)]
        out: RunDir,
    },
}

fn resolve(cli: Cli) -> Result<(RunConfig, Option<PathBuf>)> {
    if let Some(path) = cli.config {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok((cfg, cli.run_dir));
    }
    let command = cli.command.context("give a command or --config")?;
    Ok(match command {
        Command::Synth { cfg, out } => (RunConfig::Synth(cfg), out.run_dir),
        Command::Detect { cfg, out } => (RunConfig::Detect(cfg), out.run_dir),
        Command::Calibrate { cfg, out } => (RunConfig::Calibrate(cfg), out.run_dir),
        Command::Sweep { cfg, out } => (RunConfig::Sweep(cfg), out.run_dir),
        Command::Bench { cfg, out } => (RunConfig::Bench(cfg), out.run_dir),
    })
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, run_dir) = resolve(cli)?;
    cfg.validate()?;
    commands::execute(&cfg, run_dir)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
