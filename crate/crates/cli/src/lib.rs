//! Command-line front end: JSON configurations, CSV export and the
//! `construct`, `verify`, `study`, `operator-bounds`, `invert` and
//! `attractor` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{run_command, Command};
pub use config::{load_config, parse_config, Overrides, RunConfig};
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "fif",
    version,
    about = "Fractal interpolation on hyperrectangular grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Solve for the fractal function and export its lattice samples.
    Construct(RunArgs),
    /// Run every consistency check and report PASS/FAIL per check.
    Verify(RunArgs),
    /// Tabulate the distance to the seed over a parameter sequence.
    Study(RunArgs),
    /// Check the norm and Lipschitz bounds of the fractal operator.
    OperatorBounds(RunArgs),
    /// Recover a seed from a fractal function.
    Invert(RunArgs),
    /// Sample the attractor by deterministic iteration.
    Attractor(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(short, long = "out")]
    out: Option<PathBuf>,
    /// Solver tolerance (overrides `solver.tol`).
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration limit (overrides `solver.max_iter`).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Lattice steps per cell and axis (overrides `solver.refine`).
    #[arg(long)]
    refine: Option<usize>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return exit::USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return exit::SUCCESS;
        }
    };
    let (cmd, args) = match cli.command {
        Sub::Construct(a) => (Command::Construct, a),
        Sub::Verify(a) => (Command::Verify, a),
        Sub::Study(a) => (Command::Study, a),
        Sub::OperatorBounds(a) => (Command::OperatorBounds, a),
        Sub::Invert(a) => (Command::Invert, a),
        Sub::Attractor(a) => (Command::Attractor, a),
    };
    let overrides = Overrides {
        tol: args.tol,
        max_iter: args.max_iter,
        refine: args.refine,
    };
    let result = load_config(&args.config)
        .and_then(|cfg| run_command(cmd, &cfg, args.out.as_deref(), &overrides, stdout));
    match result {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
