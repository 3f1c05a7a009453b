use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpmpc::commands;
use gpmpc::config::RunConfig;
use gpmpc::Result;

#[derive(Parser)]
#[command(name = "gpmpc", version, about = "GP-based MPC for a three-zone chilled-water cooling plant")]
struct Cli {
    /// TOML configuration; a manifest.toml from a previous run replays it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: paths.out from the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic training recording and holdout
    Synth,
    /// Clean, deduplicate and train the three zone models
    Train,
    /// Multi-step rollouts on the holdout
    Validate,
    /// One closed-loop run (see [simulate] in the config)
    Simulate,
    /// Controller x scenario x initial temperature matrix
    Compare,
    /// MPC solve time against training-set size
    Bench,
}

fn run(cli: Cli) -> Result<(PathBuf, Vec<String>)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    // a replayed manifest carries its own provenance block; start fresh
    cfg.run = None;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.paths.out = o;
    }
    let out = cfg.paths.out.clone();
    let files = match cli.cmd {
        Cmd::Synth => commands::synth(&cfg, &out),
        Cmd::Train => commands::train(&cfg, &out),
        Cmd::Validate => commands::validate(&cfg, &out),
        Cmd::Simulate => commands::simulate(&cfg, &out),
        Cmd::Compare => commands::compare(&cfg, &out),
        Cmd::Bench => commands::bench(&cfg, &out),
    }?;
    Ok((out, files))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((out, files)) => {
            for f in files.iter().chain([&commands::MANIFEST.to_string()]) {
                println!("{}", out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
