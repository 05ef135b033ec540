use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use factored_glmb::io::{run_simulate, run_track};

#[derive(Parser)]
#[command(
    name = "fglmb",
    version,
    about = "Factored labeled multi-target tracker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frame file from a scenario description.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the tracker over a frame file.
    Track {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory for counts.csv and estimates.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Also write the hypothesis tree to pedigree.dot.
        #[arg(long)]
        debug_tree: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { spec, seed, out } => run_simulate(&spec, &out, seed),
        Command::Track {
            frames,
            config,
            out,
            debug_tree,
        } => run_track(&frames, &config, &out, debug_tree),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
