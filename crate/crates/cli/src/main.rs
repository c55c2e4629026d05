mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] novelty_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io(_) => 1,
            Self::Core(e) if commands::is_no_solution(e) => 2,
            Self::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "novelty", version, about = "Minimum-novelty control solvers and network experiments")]
struct Cli {
    /// Worker threads for experiments (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a continuous-time minimum-novelty transfer.
    SolveCt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a discrete-time minimum-novelty transfer.
    SolveDt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross-check with the iterative solver; exit 3 on disagreement above 1e-5.
        #[arg(long)]
        oracle: bool,
    },
    /// Controllability gramian of a continuous-time system.
    Gramian {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the ensemble experiments.
    Experiment {
        name: ExperimentName,
        /// JSON config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// 1000 realizations per condition.
        #[arg(long)]
        full_scale: bool,
    },
    /// Sample a graph realization or a rate network.
    GenerateNetwork {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentName {
    Fig2,
    Fig3,
    Fig4,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::SolveCt { config, out } => commands::solve_ct(&config, &out),
        Command::SolveDt { config, out, oracle } => commands::solve_dt(&config, &out, oracle),
        Command::Gramian { config, out } => commands::gramian(&config, &out),
        Command::Experiment {
            name,
            config,
            out,
            full_scale,
        } => {
            let config = config.as_deref();
            match name {
                ExperimentName::Fig2 => commands::fig2(config, &out),
                ExperimentName::Fig3 => commands::fig3(config, &out, cli.seed, full_scale),
                ExperimentName::Fig4 => commands::fig4(config, &out, cli.seed, full_scale),
            }
        }
        Command::GenerateNetwork { config, out } => commands::generate_network(&config, &out, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
