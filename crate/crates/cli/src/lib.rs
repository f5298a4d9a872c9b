//! Batch entry points for the antispoof toolkit.
//!
//! Exit codes are a stable contract: 0 on success, 1 on a runtime failure
//! (for example diverging training) and 2 on bad input or configuration.

use std::fmt;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod data;
pub mod manifest;

pub use config::RunConfig;

/// Marks an error as caused by the caller's input (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// Turns a library error raised while reading inputs into an input error.
pub fn as_input(e: antispoof::Error) -> anyhow::Error {
    input_error(e.to_string())
}

/// Process exit code for a failed command.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(code) = cause.downcast_ref::<antispoof::Error>().and_then(library_code) {
            return code;
        }
    }
    1
}

fn library_code(e: &antispoof::Error) -> Option<i32> {
    match e {
        antispoof::Error::Parse { .. } | antispoof::Error::Config(_) => Some(2),
        antispoof::Error::Diverged(_) => Some(1),
        antispoof::Error::File { source, .. } => library_code(source),
        _ => None,
    }
}

#[derive(Debug, Parser)]
#[command(name = "antispoof", version, about = "Spoofing countermeasure training and evaluation")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded execution for bitwise-reproducible outputs.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and cache log spectrogram and CQT features.
    Extract {
        /// Protocols to cover; defaults to the configured train and dev protocols.
        #[arg(long = "protocol")]
        protocols: Vec<PathBuf>,
    },
    /// Train a model and write checkpoints, history and a run manifest.
    Train {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score every utterance of a protocol with a trained model.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the configured dev protocol.
        #[arg(long)]
        protocol: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Equal-weight score fusion.
    Fuse {
        #[arg(long)]
        output: PathBuf,
        #[arg(required = true, num_args = 2..)]
        scores: Vec<PathBuf>,
    },
    /// EER and min t-DCF, pooled and per condition.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        /// t-DCF parameters (TOML); defaults to the configured file or built-in values.
        #[arg(long)]
        tdcf: Option<PathBuf>,
        /// `attack` or `env-attack`.
        #[arg(long, default_value = "attack")]
        group_by: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// System name used in the text report.
        #[arg(long, default_value = "system")]
        system: String,
    },
    /// Leave-k-attacks-out training and evaluation.
    Crossval {
        #[arg(long)]
        k_hold: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write a synthetic two-class corpus and a starter config.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        speakers: Option<usize>,
    },
}

/// Global options shared by every command.
#[derive(Debug, Clone)]
pub struct Globals {
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

impl Globals {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self
            .config
            .clone()
            .ok_or_else(|| input_error("this command needs --config"))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        // The global pool can only be set once per process; a second call
        // from the same process already runs single-threaded.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    let config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let g = Globals {
        config,
        seed: cli.seed,
        deterministic: cli.deterministic,
    };
    match cli.command {
        Command::Extract { protocols } => commands::cmd_extract(&g, &protocols),
        Command::Train { output_dir } => commands::cmd_train(&g, output_dir),
        Command::Score {
            checkpoint,
            protocol,
            output,
        } => commands::cmd_score(&g, &checkpoint, protocol, &output),
        Command::Fuse { output, scores } => commands::cmd_fuse(&g, &scores, &output),
        Command::Eval {
            scores,
            protocol,
            tdcf,
            group_by,
            output_dir,
            system,
        } => commands::cmd_eval(&g, &scores, &protocol, tdcf, &group_by, output_dir, &system),
        Command::Crossval { k_hold, output_dir } => commands::cmd_crossval(&g, k_hold, output_dir),
        Command::Synth { output, speakers } => commands::cmd_synth(&g, &output, speakers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&input_error("bad")), 2);
        assert_eq!(exit_code(&antispoof::Error::Diverged("nan".into()).into()), 1);
        let parse = antispoof::dataio::parse_protocol("x y", antispoof::dataio::Partition::Dev).unwrap_err();
        assert_eq!(exit_code(&parse.into()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), 1);
        let wrapped = input_error("missing").context("while training");
        assert_eq!(exit_code(&wrapped), 2);
    }
}
