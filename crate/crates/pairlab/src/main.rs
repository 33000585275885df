//! Binary entry point. Exit status: 0 on success, 1 on usage, config, or
//! IO errors, 2 when gradient verification fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use pairlab::config::RunConfig;
use pairlab::{cli, Error};

#[derive(Parser)]
#[command(name = "pairlab", version, about = "Pair-based metric learning lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output document path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method and report retrieval recall.
    Train(CommonArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(CommonArgs),
    /// Train every method on one dataset and tabulate recall.
    Ablate(CommonArgs),
    /// Sweep a similarity scenario and dump per-method pair weights.
    DumpWeights(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::ToleranceExceeded { .. }) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> pairlab::Result<()> {
    let args = match &cli.command {
        Command::Train(a)
        | Command::Gradcheck(a)
        | Command::Ablate(a)
        | Command::DumpWeights(a) => a,
    };
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    match cli.command {
        Command::Train(_) => cli::cmd_train(&cfg),
        Command::Gradcheck(_) => cli::cmd_gradcheck(&cfg),
        Command::Ablate(_) => cli::cmd_ablate(&cfg),
        Command::DumpWeights(_) => cli::cmd_dump_weights(&cfg),
    }
}
