//! `stae`: synthesize data, train, score, detect and evaluate.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "stae", version, about = "Spatiotemporal autoencoder video anomaly detection")]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "stae-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic training video, test video and test labels.
    Synth,
    /// Train on a frame directory (or a directory of frame directories).
    Train { data_dir: PathBuf },
    /// Write per-frame scores for every test video.
    Score { checkpoint: PathBuf, test_dir: PathBuf },
    /// Group regularity dips of score files into events.
    Detect { scores_dir: PathBuf },
    /// AUC, EER and event counts against ground-truth labels.
    Evaluate {
        scores_dir: PathBuf,
        /// A labels CSV, or a directory of `<video>.csv` label files.
        labels: PathBuf,
    },
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let explicit = cli.config.is_some();
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.resolve(cli.seed)?;
    let out = cli.out.as_path();

    match &cli.command {
        Command::Synth => {
            prepare_out(out)?;
            cfg.write_resolved(out)?;
            commands::synth(&cfg, out)
        }
        Command::Train { data_dir } => {
            prepare_out(out)?;
            cfg.write_resolved(out)?;
            commands::train_cmd(&cfg, data_dir, out)
        }
        Command::Score { checkpoint, test_dir } => {
            let ckpt = commands::load_checkpoint(&mut cfg, explicit, checkpoint)?;
            if let Some(s) = cli.seed.filter(|&s| s != cfg.seed) {
                bail!("--seed {s} differs from the checkpoint's seed {}", cfg.seed);
            }
            prepare_out(out)?;
            cfg.write_resolved(out)?;
            commands::score(&cfg, &ckpt, test_dir, out)
        }
        Command::Detect { scores_dir } => {
            prepare_out(out)?;
            cfg.write_resolved(out)?;
            commands::detect(&cfg, scores_dir, out)
        }
        Command::Evaluate { scores_dir, labels } => {
            prepare_out(out)?;
            cfg.write_resolved(out)?;
            commands::evaluate_cmd(&cfg, scores_dir, labels, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
