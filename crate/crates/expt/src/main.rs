//! `expt` — pretrain, adapt, sweep, and report from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use expt::pipeline::{
    cmd_adapt, cmd_pretrain, cmd_report, cmd_sweep, load_config, AdaptationMode, PipelineError,
};

#[derive(Parser)]
#[command(name = "expt", about = "Few-shot black-box optimization by synthetic pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Propose the whole candidate batch at once.
    Simultaneous,
    /// Propose one candidate per round, feeding each result back as context.
    Sequential,
}

impl From<Mode> for AdaptationMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Simultaneous => AdaptationMode::Simultaneous,
            Mode::Sequential => AdaptationMode::Sequential,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model on synthetic functions and save checkpoints.
    Pretrain {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed (one pretraining run per seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize one task with the configured method and append a metrics row.
    Adapt {
        #[arg(long)]
        config: PathBuf,
        /// Pretrained checkpoint (required for expt and tnp-ed methods).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Kernel name (rbf, matern52, linear, cosine, periodic) or a CSV
        /// reference-table path.
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = Mode::Simultaneous)]
        mode: Mode,
        /// Replace the config's seed for candidate generation and labeling.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Adapt across every configured seed, kernel, and checkpoint step.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize one or more metrics ledgers.
    Report {
        /// Metrics CSV path; repeat to aggregate several ledgers.
        #[arg(long, required = true)]
        metrics: Vec<PathBuf>,
        /// Aggregate even if the ledgers came from different generators.
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Pretrain { config, seed } => {
            let config = load_config(&config)?;
            cmd_pretrain(&config, seed)?;
        }
        Command::Adapt { config, checkpoint, task, mode, seed } => {
            let config = load_config(&config)?;
            cmd_adapt(&config, checkpoint.as_deref(), &task, mode.into(), seed)?;
        }
        Command::Sweep { config } => {
            let config = load_config(&config)?;
            cmd_sweep(&config)?;
        }
        Command::Report { metrics, force } => {
            cmd_report(&metrics, force)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    #[cfg(feature = "parallel")]
    if let Ok(threads) = std::env::var("EXPT_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                // Ignore the error if a pool already exists (e.g. under a
                // test harness that initialized one first).
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: EXPT_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
