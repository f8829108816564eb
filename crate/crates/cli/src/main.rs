//! `ranrec`: synth → train → embed → recommend / detect → evaluate → project.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(
    name = "ranrec",
    version,
    about = "RAN configuration recommendation from graph embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Sgnn,
    Gae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Closest,
    Majority,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network and its ground-truth sidecar.
    Synth {
        /// TOML generator spec; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Network JSON; the sidecar goes to `<stem>.truth.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder on the training split and write a checkpoint.
    Train {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sgnn")]
        model: ModelArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every cell of a network into a store.
    Embed {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides the checkpoint's sampler seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommend configurations for cells absent from the store.
    Recommend {
        #[arg(long)]
        store: PathBuf,
        /// Network file holding the new cells and their links.
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        k: Option<usize>,
        /// Overrides the checkpoint's sampler seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every stored cell with an isolation forest.
    Detect {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare untrained, GAE and S-GNN accuracy; writes the table and
    /// one projection CSV per model.
    Evaluate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project stored embeddings onto their first two principal components.
    Project {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, seed, out } => commands::synth(config.as_deref(), seed, &out),
        Command::Train {
            network,
            config,
            model,
            seed,
            out,
        } => commands::train(&network, config.as_deref(), model, seed, &out),
        Command::Embed {
            network,
            checkpoint,
            seed,
            out,
        } => commands::embed(&network, &checkpoint, seed, &out),
        Command::Recommend {
            store,
            cells,
            config,
            mode,
            k,
            seed,
            out,
        } => commands::recommend(&commands::RecommendArgs {
            store: &store,
            cells: &cells,
            config: config.as_deref(),
            mode,
            k,
            seed,
            out: &out,
        }),
        Command::Detect {
            store,
            config,
            threshold,
            seed,
            out,
        } => commands::detect(&store, config.as_deref(), threshold, seed, &out),
        Command::Evaluate {
            network,
            config,
            seed,
            out,
        } => commands::evaluate(&network, config.as_deref(), seed, &out),
        Command::Project { store, out } => commands::project(&store, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANREC_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
