use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpd_core::Split;

mod config;
mod eval;
mod gen;
mod infer;
mod manifest;
mod train;

use config::Config;

/// In-cabin presence detection from synthetic WiFi CSI.
///
/// Exit status: 0 on success, 1 for usage errors, 2 for missing or invalid
/// data, 3 when training or inference hits a numerical failure.
#[derive(Debug, Parser)]
#[command(name = "cpd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; every key is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate recordings and feature windows for every split.
    Gen {
        /// Dataset directory (defaults to `data.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recordings per split, overriding every configured count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run one training stage.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Dataset directory (defaults to `data.dir`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory for checkpoints and metrics.
        #[arg(long)]
        out: PathBuf,
        /// Best checkpoint of a stage-1 run; required for stage 2.
        #[arg(long, required_if_eq("stage", "2"))]
        stage1_checkpoint: Option<PathBuf>,
        /// Override the epoch budget of the selected stage.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a three-class checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory (defaults to `data.dir`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Directory for the reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-window probabilities and smoothed decisions for one recording.
    Infer {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Pretrain,
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Pretrain => Split::Pretrain,
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Gen { out, count } => {
            if let Some(dir) = out {
                config.data.dir = dir;
            }
            if let Some(n) = count {
                let c = &mut config.data.counts;
                (c.pretrain, c.train, c.val, c.test) = (n, n, n, n);
            }
            gen::run(&config)
        }
        Command::Train {
            stage,
            data,
            out,
            stage1_checkpoint,
            epochs,
        } => {
            if let Some(dir) = data {
                config.data.dir = dir;
            }
            if let Some(e) = epochs {
                match stage {
                    1 => config.stage1.epochs = e,
                    _ => config.stage2.epochs = e,
                }
            }
            train::run(&config, stage, &out, stage1_checkpoint.as_deref())
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => {
            if let Some(dir) = data {
                config.data.dir = dir;
            }
            eval::run(&config, &checkpoint, split.into(), &out)
        }
        Command::Infer {
            recording,
            checkpoint,
            out,
        } => infer::run(&config, &recording, &checkpoint, out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use cpd_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFiniteActivation(_) | E::NonFiniteGradient(_) | E::Diverged { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
