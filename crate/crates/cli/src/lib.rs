//! Command-line orchestration: config files, subcommands and artifacts.

pub mod commands;
pub mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "worldprobe", version, about = "Train gridworld agents and probe their activations for position")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Sets the train, collect and probe seeds to N, N+1 and N+2.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["random", "monster", "trap", "ultimate"])]
    pub map: Option<String>,
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["3", "5", "9"]))]
    pub crop: Option<String>,
    /// Run sequentially with a single rollout worker.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent with PPO; writes checkpoints and metrics.csv.
    Train {
        /// Validate the config and exit without writing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Record activations and positions from a trained agent.
    Collect {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate the configured probes; writes report.csv.
    Probe,
    /// Re-evaluate saved probes; checks the result against report.csv.
    Eval,
    /// train, collect, probe and eval in sequence.
    Experiment,
    /// Print one seeded episode as text frames.
    Render {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Stop after this many steps.
        #[arg(long)]
        frames: Option<usize>,
        /// Pick the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            map: self.map.as_deref().map(|m| m.parse().expect("clap restricts map names")),
            crop: self.crop.as_deref().map(|c| c.parse().expect("clap restricts crop sizes")),
            deterministic: self.deterministic,
        }
    }

    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.common.resolve()?;
    worldprobe::par::set_gemm_exec(cfg.exec());
    match &cli.command {
        Command::Train { dry_run } => commands::train(&cfg, *dry_run).map(drop),
        Command::Collect { checkpoint } => commands::collect(&cfg, checkpoint.as_deref()).map(drop),
        Command::Probe => commands::probe(&cfg).map(drop),
        Command::Eval => commands::eval(&cfg).map(drop),
        Command::Experiment => commands::experiment(&cfg).map(drop),
        Command::Render { checkpoint, frames, greedy } => {
            print!("{}", commands::render(&cfg, checkpoint.as_deref(), *frames, *greedy)?);
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code:
/// 0 success, 1 config or usage error, 2 runtime error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

