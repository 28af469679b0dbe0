//! Command-line orchestration of the curation pipeline: one TOML config, one
//! artifact directory, one subcommand per stage.

pub mod config;
pub mod error;
pub mod stages;
pub mod store;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use stages::{ExportKind, Runner, Stage, StageStatus};
pub use store::{RunManifest, Store};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "tabcurate", version, about = "Embedding-guided curation of synthetic tabular tasks")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Rerun this stage and every later one even when up to date.
    #[arg(long, global = true, value_enum)]
    pub stage_from: Option<Stage>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, filter and standardize the CSVs in the data directory.
    Ingest,
    /// Generate the synthetic task pool.
    GenSynthetic,
    /// Generate pure-noise control datasets.
    GenControl,
    /// Pretrain the base model on the prior.
    Pretrain,
    /// Embed synthetic, real and control datasets.
    Embed,
    /// Classifier-based pairwise distinguishability.
    Distinguish,
    /// Select the most target-like synthetic tasks.
    Curate,
    /// Continue pretraining on the selected tasks.
    Finetune,
    /// Learning curves and holdout errors on the target datasets.
    Eval,
    /// Data-efficiency of the adapted model against every other model.
    Efficiency,
    /// Write an artifact as CSV to `--out` or stdout.
    Export {
        #[arg(value_enum)]
        what: ExportKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage in order, skipping those already up to date.
    Pipeline,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::GenSynthetic => Stage::GenSynthetic,
            Command::GenControl => Stage::GenControl,
            Command::Pretrain => Stage::Pretrain,
            Command::Embed => Stage::Embed,
            Command::Distinguish => Stage::Distinguish,
            Command::Curate => Stage::Curate,
            Command::Finetune => Stage::Finetune,
            Command::Eval => Stage::Eval,
            Command::Efficiency => Stage::Efficiency,
            Command::Export { .. } | Command::Pipeline => return None,
        })
    }
}

/// Resolve the config from the command line.
pub fn resolve_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        // Fails only when a pool already exists, which keeps that pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let cfg = resolve_config(&cli)?;
    let runner = Runner::new(cfg, cli.stage_from)?;
    match &cli.command {
        Command::Pipeline => {
            for (stage, status) in runner.pipeline()? {
                println!("{stage}: {}", if status == StageStatus::Ran { "ran" } else { "up to date" });
            }
        }
        Command::Export { what, out } => {
            let text = runner.export(*what)?;
            match out {
                Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e))?,
                None => print!("{text}"),
            }
        }
        cmd => {
            let stage = cmd.stage().expect("stage command");
            let status = runner.run_stage(stage).map_err(|e| CliError::Stage {
                stage: stage.name().into(),
                completed: Vec::new(),
                source: Box::new(e),
            })?;
            println!("{stage}: {}", if status == StageStatus::Ran { "ran" } else { "up to date" });
        }
    }
    Ok(())
}
