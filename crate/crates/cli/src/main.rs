//! `morrey-ns`: batch driver for norm evaluation, decomposition, solves and
//! the verification suite. Configuration is one JSON file plus flag
//! overrides; every output is plain JSON or CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Exit, Failure};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "morrey-ns", version, about = "Mixed-Morrey norms, Navier-Stokes solves and inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Refuse to solve when the data fail the smallness test.
    #[arg(long, global = true)]
    require_admissible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the norm of each configured field file.
    Norm,
    /// Write the dyadic blocks of a field file.
    Decompose,
    /// Run the Picard solver and write trajectory, report and block norms.
    Solve,
    /// Run lab checks and write a JSON-lines report.
    Verify,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::new(Exit::Malformed, format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::new(Exit::Malformed, format!("{}: {e}", path.display())))?
        }
        None => serde_json::from_str::<ExperimentConfig>("{}").expect("empty config parses"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Exit, Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::new(Exit::Other, e.to_string()))?;
    }
    let cfg = load_config(cli)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Norm => commands::norm(&cfg, &mut stdout),
        Command::Decompose => commands::decompose(&cfg, &mut stdout),
        Command::Solve => commands::solve(&cfg, cli.require_admissible, &mut stdout),
        Command::Verify => commands::verify(&cfg, &mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exit = match run(&cli) {
        Ok(exit) => exit,
        Err(f) => {
            eprintln!("morrey-ns: {}", f.message);
            f.exit
        }
    };
    ExitCode::from(exit as u8)
}
