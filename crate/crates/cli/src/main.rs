mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{artifacts, eval, filters, gen_data, reconstruct, train};

#[derive(Parser, Debug)]
#[command(name = "microct", version, about = "Limited- and sparse-angle tomography with unrolled wavelet networks")]
struct Cli {
    /// JSON file with default values for the subcommand's flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (results do not depend on it)
    #[arg(long, global = true, env = "MICROCT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic phantom dataset
    GenData(gen_data::Args),
    /// Train an unrolled network on a dataset
    Train(train::Args),
    /// Reconstruct a dataset split with a network, FBP or ISTA
    Reconstruct(reconstruct::Args),
    /// Compare reconstructions against ground truth
    Eval(eval::Args),
    /// Classify edge visibility and predict streak lines
    PredictArtifacts(artifacts::Args),
    /// Tile learned filters or an estimated kernel atlas
    DumpFilters(filters::Args),
}

/// Exit status for a failed run.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<microct::Error>() {
        if e.is_integrity_failure() {
            return 3;
        }
        if matches!(e, microct::Error::InvalidArgument(_)) {
            return 2;
        }
    }
    if err.downcast_ref::<config::UsageError>().is_some() {
        return 2;
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config::UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::GenData(a) => gen_data::run(config::merge(a, cfg)?),
        Command::Train(a) => train::run(config::merge(a, cfg)?),
        Command::Reconstruct(a) => reconstruct::run(config::merge(a, cfg)?),
        Command::Eval(a) => eval::run(config::merge(a, cfg)?),
        Command::PredictArtifacts(a) => artifacts::run(config::merge(a, cfg)?),
        Command::DumpFilters(a) => filters::run(config::merge(a, cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
