use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use deepmpc::cli::{self, ExperimentConfig};
use deepmpc::Error;

#[derive(Parser)]
#[command(name = "deepmpc", version, about = "Explicit MPC, exact and learned ReLU controllers, statistical verification")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Re-solve a sample of generated rows and fail on any mismatch.
    #[arg(long, global = true)]
    audit: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample states and label them with the implicit MPC input.
    Generate,
    /// Enumerate the explicit control law and its memory footprint.
    Explicit,
    /// Build the exact ReLU representation of the explicit law.
    Exactnet,
    /// Train the ReLU network on the generated dataset.
    Train,
    /// Fit the polynomial and refitted PWA baselines.
    Baselines,
    /// Closed-loop comparison against the implicit MPC.
    Evaluate,
    /// Labeled sets, safe sets and verification metrics.
    Verify,
    /// Summarize the artifacts of earlier stages.
    Report,
}

fn print<T: Serialize>(v: T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn run(args: &Args) -> Result<(), Error> {
    let path = args.config.as_ref().ok_or_else(|| Error::PreconditionViolated("--config <file> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    match args.command {
        Command::Generate => print(cli::cmd_generate(&cfg, args.audit)?),
        Command::Explicit => print(cli::cmd_explicit(&cfg)?),
        Command::Exactnet => print(cli::cmd_exactnet(&cfg)?),
        Command::Train => print(cli::cmd_train(&cfg)?),
        Command::Baselines => print(cli::cmd_baselines(&cfg)?),
        Command::Evaluate => print(cli::cmd_evaluate(&cfg)?),
        Command::Verify => print(cli::cmd_verify(&cfg)?),
        Command::Report => {
            let r = cli::cmd_report(&cfg)?;
            print!("{}", cli::render_markdown(&r));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
