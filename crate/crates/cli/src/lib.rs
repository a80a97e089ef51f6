//! Command-line driver: simulation, data preparation, training, evaluation,
//! single-image inference and timing.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dpdnet::model::InputVariant;
use dpdnet::{Error, Result};

use crate::config::{ExperimentConfig, Overrides, DATA_ROOT_ENV};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::NonFiniteLoss { .. } | Error::Tensor(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpdnet", version, about = "Dual-pixel defocus deblurring experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Network input: single, dual or triple.
    #[arg(long, global = true)]
    pub variant: Option<InputVariant>,
    #[arg(long, global = true)]
    pub patch_size: Option<usize>,
    #[arg(long, global = true)]
    pub discard_fraction: Option<f64>,
    /// Bit depth of dataset PNGs (8 or 16).
    #[arg(long, global = true)]
    pub bit_depth: Option<u8>,
    /// f-number; repeat or separate with commas for several apertures.
    #[arg(long, global = true, value_delimiter = ',')]
    pub aperture: Vec<f64>,
    /// Output directory for run artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 forces single-threaded execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render dual-pixel datasets, one directory per aperture.
    Synth,
    /// Split scenes and build the train/val patch caches.
    Prep,
    /// Train and checkpoint the network.
    Train {
        /// Continue from `<out>/train/last.ckpt` if it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Score the evaluation split and write the category report.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Deblur one scene: `L R` (dual), `B` (single) or `L R B` (triple).
    Infer {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output PNG; defaults to `<out>/infer/<name>_deblurred.png`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time full-frame inference.
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            variant: self.variant,
            patch_size: self.patch_size,
            discard_fraction: self.discard_fraction,
            bit_depth: self.bit_depth,
            apertures: self.aperture.clone(),
            out: self.out.clone(),
            threads: self.threads,
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let env = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        base.resolve(env, &self.overrides())
    }
}

fn set_threads(n: usize) {
    if n > 0 {
        // fails only if the pool already exists, e.g. a second run in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one command and returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let mut cfg = cli.global.resolve()?;
    set_threads(cfg.threads);
    let mut lines = Vec::new();
    match &cli.command {
        Command::Synth => {
            let s = commands::cmd_synth(&cfg)?;
            for dir in &s.dirs {
                lines.push(format!("wrote {} scenes to {}", s.scenes, dir.display()));
            }
        }
        Command::Prep => {
            let s = commands::cmd_prep(&cfg)?;
            lines.push(format!(
                "train: {} scenes, {} patches extracted, {} kept",
                s.train.scenes, s.train.extracted, s.train.kept
            ));
            lines.push(format!(
                "val: {} scenes, {} patches extracted, {} kept",
                s.val.scenes, s.val.extracted, s.val.kept
            ));
            lines.push(format!("test: {} scenes", s.test_scenes));
        }
        Command::Train { resume } => {
            let s = commands::cmd_train(&cfg, *resume)?;
            lines.push(format!(
                "epochs {}; best val MSE {:.6} at epoch {}; final train MSE {:.6}; best checkpoint {}",
                s.epochs,
                s.best_val,
                s.best_epoch,
                s.final_train_mse,
                s.best_checkpoint.display()
            ));
        }
        Command::Eval { checkpoint } => {
            if checkpoint.is_some() {
                cfg.eval.checkpoint = checkpoint.clone();
            }
            let table = commands::cmd_eval(&cfg)?;
            lines.extend(table.to_text().lines().map(str::to_owned));
        }
        Command::Infer {
            images,
            checkpoint,
            output,
        } => {
            if checkpoint.is_some() {
                cfg.eval.checkpoint = checkpoint.clone();
            }
            let path = commands::cmd_infer(&cfg, images, output.as_deref())?;
            lines.push(format!("wrote {}", path.display()));
        }
        Command::Bench { checkpoint } => {
            if checkpoint.is_some() {
                cfg.eval.checkpoint = checkpoint.clone();
            }
            let (_, summary) = commands::cmd_bench(&cfg)?;
            lines.push(summary);
        }
    }
    Ok(lines)
}
