//! `dirac-lattice` command-line entry point.

mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dirac_lattice::io::{emit_tables, sha256_file, RunManifest};
use dirac_lattice::units::ConfigExt;
use dirac_lattice::{parse_config, Error};

/// Exit codes: 2 configuration or usage, 3 numerical failure, 4 I/O.
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "dirac-lattice", version, about = "Emitter lattices coupled through a photonic Dirac cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// RNG seed (overrides `seed` in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; affects wall-clock time only.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Multiplier on the default +iε regulator.
    #[arg(long, global = true)]
    eps_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Bloch bands, band windows and gap scans.
    Bands { config: PathBuf },
    /// Chern numbers from the Berry flux.
    Chern { config: PathBuf },
    /// Stripe spectrum with edge classification.
    Edge { config: PathBuf },
    /// Finite-lattice spectrum or driven dynamics.
    Evolve { config: PathBuf },
    /// Markov-validity bound.
    Validate { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bands { .. } => "bands",
            Command::Chern { .. } => "chern",
            Command::Edge { .. } => "edge",
            Command::Evolve { .. } => "evolve",
            Command::Validate { .. } => "validate",
        }
    }

    fn config(&self) -> &Path {
        match self {
            Command::Bands { config } | Command::Chern { config } | Command::Edge { config } | Command::Evolve { config } | Command::Validate { config } => {
                config
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let start = Instant::now();
    let path = cli.command.config();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(s) = cli.eps_scale {
        raw.insert("epsilon_scale".into(), s.to_string());
    }
    let seed = match cli.seed {
        Some(s) => s,
        None => raw.get_u64("seed")?.unwrap_or(0),
    };
    raw.insert("seed".into(), seed.to_string());
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    let outcome = match &cli.command {
        Command::Bands { .. } => commands::bands(&raw),
        Command::Chern { .. } => commands::chern(&raw),
        Command::Edge { .. } => commands::edge(&raw),
        Command::Evolve { .. } => commands::evolve_cmd(&raw, seed),
        Command::Validate { .. } => commands::validate(&raw),
    }?;
    let mut inputs = outcome.inputs;
    inputs.insert(path.display().to_string(), sha256_file(path)?);
    let mut manifest = RunManifest::new(cli.command.name(), outcome.config, seed, inputs);
    manifest.workers = workers;
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    let written = emit_tables(&outcome.tables, &outcome.summary, &cli.out_dir, &mut manifest)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
