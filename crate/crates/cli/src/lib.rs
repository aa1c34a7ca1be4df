//! Command-line driver: `ingest`, `train`, `evaluate`, `serve-shard` and
//! `dump-embeddings`, all configured by one TOML file.

pub mod config;
pub mod error;

mod commands;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hetrec", version, about = "Train and evaluate node embeddings on heterogeneous interaction graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override one configuration key, e.g. `--set model.dim=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and validate the graph and print schema and degree statistics.
    /// With `--log`, first split an interaction log by time.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Interaction log `user<TAB>item<TAB>behavior<TAB>timestamp` to split.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Where the split writes train/val/test logs and train_edges.tsv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        val_frac: f64,
    },
    /// Run walks, sampling and training; write a checkpoint and metrics.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint with recall@K on held-out interactions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out interaction log; defaults to `eval.truth_path`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write per-user recall to this file.
        #[arg(long)]
        per_user: Option<PathBuf>,
    },
    /// Serve one parameter shard until interrupted.
    ServeShard {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        index: usize,
        /// Bind address; defaults to `ps.endpoints[index]`.
        #[arg(long)]
        addr: Option<String>,
    },
    /// Write `node_id<TAB>v1 v2 ...` for every node.
    DumpEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only nodes of this type, written with bare ids.
        #[arg(long)]
        node_type: Option<String>,
    },
}

/// Sets the returned flag on SIGINT/SIGTERM. A second signal exits at once.
fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    let installed = ctrlc::set_handler(move || {
        if f.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        log::warn!("interrupt received; finishing the current step");
    });
    if let Err(e) = installed {
        log::warn!("could not install signal handler: {e}");
    }
    flag
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { common, log, out_dir, train_frac, val_frac } => {
            let cfg = RunConfig::load(&common.config, &common.overrides)?;
            commands::ingest(&cfg, &commands::IngestArgs { log, out_dir, train_frac, val_frac })
        }
        Command::Train { common } => {
            let cfg = RunConfig::load(&common.config, &common.overrides)?;
            commands::train(&cfg, interrupt_flag())
        }
        Command::Evaluate { common, checkpoint, truth, per_user } => {
            let cfg = RunConfig::load(&common.config, &common.overrides)?;
            commands::evaluate(&cfg, &commands::EvaluateArgs { checkpoint, truth, per_user })
        }
        Command::ServeShard { common, index, addr } => {
            let cfg = RunConfig::load(&common.config, &common.overrides)?;
            commands::serve_shard(&cfg, &commands::ServeArgs { index, addr }, interrupt_flag())
        }
        Command::DumpEmbeddings { common, checkpoint, out, node_type } => {
            let cfg = RunConfig::load(&common.config, &common.overrides)?;
            commands::dump_embeddings(&cfg, &commands::DumpArgs { checkpoint, out, node_type })
        }
    }
}
