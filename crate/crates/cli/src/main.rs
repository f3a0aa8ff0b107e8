//! `mvpure` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvpure::harness::{self, ExperimentConfig, SnrParam};
use mvpure::FilterKind;

#[derive(Parser)]
#[command(name = "mvpure", version, about = "Reduced-rank spatial filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a config with one SNR list replaced.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// sinr_db, sbnr_db or smnr_db.
        #[arg(long)]
        param: SnrParam,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a config file against the schema.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the small built-in configuration.
    Demo {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs executed concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated filter kinds replacing the roster.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<FilterKind>>,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(f) = &self.filters {
            cfg.filter_roster = f.clone();
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<harness::HarnessError> for Failure {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn execute(mut cfg: ExperimentConfig, common: &Common) -> Result<(), Failure> {
    common.apply(&mut cfg);
    cfg.validate()?;
    let summary = harness::run_to_dir(&cfg, &common.out, common.jobs)?;
    eprintln!("wrote {} summary rows to {}", summary.len(), common.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, common } => execute(ExperimentConfig::load(&config)?, &common),
        Command::Sweep { config, param, values, common } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::demo(),
            };
            cfg.set_sweep(param, values);
            execute(cfg, &common)
        }
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?;
            println!("{}: ok", config.display());
            Ok(())
        }
        Command::Demo { common } => execute(ExperimentConfig::demo(), &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
