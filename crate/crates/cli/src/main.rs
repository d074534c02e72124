//! Command-line entry point.
//!
//! Every subcommand takes the same flags: `--config <file>` (required),
//! `--out <dir>`, `--overlay-theory`, `--threads N`. The `SLVST_THREADS`
//! environment variable overrides `--threads` when both are given. Errors
//! print one `error[<category>]: ...` line and exit with the category's
//! code; a stack trace is never shown.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slvst::config::{parse_config, Command};
use slvst::run::{run, RunOptions};
use slvst::{io_err, CliError};

#[derive(Parser)]
#[command(name = "slvst", version, about = "Superradiance-lattice scanning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML config describing the run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw predicted ladder lines over the rendered map.
    #[arg(long)]
    overlay_theory: bool,
    /// Worker threads (overridden by `SLVST_THREADS` if set).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Density of states of the lattice bands.
    Dos(RunArgs),
    /// Ladder levels of the tilted chain at one velocity.
    Wsl(RunArgs),
    /// Probe absorption spectrum at one velocity.
    Absorb(RunArgs),
    /// Velocity-scanned absorption map with tracked ladders.
    VstMap(RunArgs),
    /// Geometric band phase, by loop product or by ladder slopes.
    Zak(RunArgs),
    /// First Chern number of a pump cycle from plaquette curvature.
    Chern(RunArgs),
    /// Chern number read off ladder displacement across a pump cycle.
    Winding(RunArgs),
}

impl CliCommand {
    fn split(&self) -> (Command, &RunArgs) {
        match self {
            CliCommand::Dos(a) => (Command::Dos, a),
            CliCommand::Wsl(a) => (Command::Wsl, a),
            CliCommand::Absorb(a) => (Command::Absorb, a),
            CliCommand::VstMap(a) => (Command::VstMap, a),
            CliCommand::Zak(a) => (Command::Zak, a),
            CliCommand::Chern(a) => (Command::Chern, a),
            CliCommand::Winding(a) => (Command::Winding, a),
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("SLVST_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("SLVST_THREADS must be an integer, got `{s}`"))),
        Err(_) => Ok(flag),
    }
}

fn try_main() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (expected, args) = cli.command.split();

    if let Some(n) = thread_count(args.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    let text = std::fs::read_to_string(&args.config).map_err(io_err(&*args.config))?;
    let config = parse_config(&text)?;
    if config.command != expected {
        return Err(CliError::Config(format!(
            "config file declares command `{}` but subcommand `{}` was invoked",
            config.command.name(),
            expected.name()
        )));
    }

    let outcome = run(
        &config,
        &RunOptions {
            out_dir: args.out.clone(),
            overlay: args.overlay_theory,
        },
    )?;

    for (key, value) in &outcome.summary {
        println!("{key} = {value}");
    }
    for path in &outcome.files {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
