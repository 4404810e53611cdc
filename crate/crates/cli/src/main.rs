mod commands;
mod config;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use advmask_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ExperimentConfig, SNAPSHOT_FILE};
use crate::context::Context;

#[derive(Parser)]
#[command(name = "advmask", version, about = "Adversarial mask textures: train, evaluate, defend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a mask texture.
    Train(Common),
    /// Similarity of masked probes to their enrolled identities.
    Eval(Common),
    /// Mask × model similarity matrix.
    Transfer(Common),
    /// Threshold at a target false-accept rate.
    Calibrate(Common),
    /// Frame-by-frame verification of a stream.
    Simulate(Common),
    /// Mask substitution or adversarial training-set generation.
    Defend(Common),
    /// Merge reports and redraw plots.
    Report(Common),
    /// Write a synthetic face collection.
    Synth(Common),
    /// Verify the checksums of asset-backed models.
    Assets(Common),
}

type Handler = fn(&mut Context) -> Result<serde_json::Value>;

impl Command {
    fn split(self) -> (Common, Handler) {
        match self {
            Command::Train(c) => (c, commands::train),
            Command::Eval(c) => (c, commands::eval),
            Command::Transfer(c) => (c, commands::transfer),
            Command::Calibrate(c) => (c, commands::calibrate),
            Command::Simulate(c) => (c, commands::simulate),
            Command::Defend(c) => (c, commands::defend),
            Command::Report(c) => (c, commands::report),
            Command::Synth(c) => (c, commands::synth),
            Command::Assets(c) => (c, commands::assets),
        }
    }
}

fn run(common: Common, handler: Handler) -> Result<serde_json::Value> {
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::InvalidConfig("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = match common.out {
        Some(o) => std::path::absolute(&o).unwrap_or(o),
        None => config.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    config.out = Some(out.clone());
    let snapshot = out.join(SNAPSHOT_FILE);
    std::fs::write(&snapshot, config.to_toml()).map_err(|e| Error::Io {
        path: snapshot,
        source: e,
    })?;
    let mut ctx = Context::new(config, out)?;
    handler(&mut ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, handler) = cli.command.split();
    match run(common, handler) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = json!({
                "error": e.kind(),
                "message": e.to_string(),
                "path": e.path(),
            });
            eprintln!("{report}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
