//! Command-line experiment harness for robust subspace recovery.
//!
//! Subcommands `generate`, `run`, `stats` and `phase` read a flat
//! `key=value` configuration (see [`config::KEYS`]), run seeded experiments
//! and write CSV. Exit codes: 0 success, 1 usage error, 2 runtime failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod summary;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Algorithm, ExperimentConfig, KeyValues};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "robsub", version, about = "Seeded robust subspace recovery experiments")]
pub struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "K")]
    pub reps: Option<usize>,
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    /// Restore the full repetition counts.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Override any config key; repeatable, applied last.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a haystack dataset (points.csv, truth.csv).
    Generate,
    /// Repeated runs of one or more algorithms with per-iteration summaries.
    Run {
        #[arg(long)]
        algorithm: Option<String>,
        /// Print the work estimate and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Stability diagnostics of a labeled dataset.
    Stats {
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Mean log10 final error over an N x D grid with T = 2N.
    Phase {
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long, value_name = "LIST")]
        n_grid: Option<String>,
        #[arg(long, value_name = "LIST")]
        d_grid: Option<String>,
        #[arg(long)]
        dry_run: bool,
    },
    /// List the configuration keys.
    Keys,
}

impl Cli {
    /// Merges the config file, the flags and the `--set` pairs.
    pub fn key_values(&self) -> CliResult<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        let mut flag = |k: &str, v: Option<String>| -> CliResult<()> {
            match v {
                Some(v) => kv.set(k, v),
                None => Ok(()),
            }
        };
        flag("seed", self.seed.map(|s| s.to_string()))?;
        flag("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        flag("reps", self.reps.map(|s| s.to_string()))?;
        flag("threads", self.threads.map(|s| s.to_string()))?;
        flag("paper_scale", self.paper_scale.then(|| "true".into()))?;
        match &self.command {
            Command::Run { algorithm, dry_run } => {
                flag("algorithm", algorithm.clone())?;
                flag("dry_run", dry_run.then(|| "true".into()))?;
            }
            Command::Stats { data, truth, gamma } => {
                flag("data", data.as_ref().map(|p| p.display().to_string()))?;
                flag("truth", truth.as_ref().map(|p| p.display().to_string()))?;
                flag("gamma", gamma.map(|g| g.to_string()))?;
            }
            Command::Phase {
                algorithm,
                n_grid,
                d_grid,
                dry_run,
            } => {
                flag("algorithm", algorithm.clone())?;
                flag("n_grid", n_grid.clone())?;
                flag("d_grid", d_grid.clone())?;
                flag("dry_run", dry_run.then(|| "true".into()))?;
            }
            Command::Generate | Command::Keys => {}
        }
        for pair in &self.set {
            kv.set_pair(pair)?;
        }
        Ok(kv)
    }

    pub fn execute(&self) -> CliResult<String> {
        if let Command::Keys = self.command {
            return Ok(config::KEYS.iter().map(|(k, d)| format!("{k}\t{d}\n")).collect());
        }
        let cfg = ExperimentConfig::from_kv(&self.key_values()?)?;
        match self.command {
            Command::Generate => commands::cmd_generate(&cfg),
            Command::Run { .. } => commands::cmd_run(&cfg),
            Command::Stats { .. } => commands::cmd_stats(&cfg),
            Command::Phase { .. } => commands::cmd_phase(&cfg),
            Command::Keys => unreachable!(),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code together with the stdout and stderr text.
pub fn run_cli<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 { (0, text, String::new()) } else { (1, String::new(), text) };
        }
    };
    match cli.execute() {
        Ok(out) => (0, out, String::new()),
        Err(e) => (e.exit_code(), String::new(), format!("error: {e}\n")),
    }
}
