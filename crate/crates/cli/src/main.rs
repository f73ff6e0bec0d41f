//! `ferrovi`: batch runs of the point scenarios and the structural benchmarks.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ferrovi", version, about = "Ferroelectric switching and saturation: point scenarios and FE benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Electric hysteresis loop to ±2 E_C.
    Hysteresis,
    /// Same loop, reported as strain against field.
    Butterfly,
    /// Poling followed by a compressive stress ramp at zero field.
    MechDepol,
    /// Field ramp on points pre-poled at an angle to the field.
    Nonprop,
    /// Clamped beam under a tip shear traction.
    Beam,
    /// Two-layer bender driven by a poling field in the upper layer.
    Bimorph,
    /// Block pre-poled at an angle, loaded between two electrodes.
    NonpropField,
    /// Load program read from `--program`.
    Custom,
}

#[derive(Clone, Debug, clap::Args)]
pub struct Options {
    /// Material preset (table1 or table2).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Material parameters as JSON; overrides --preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub material: Option<PathBuf>,
    /// Steps per E_C for point scenarios, load steps for benchmarks.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
    /// Write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Relative residual tolerance.
    #[arg(long, global = true, value_name = "REL")]
    pub tol: Option<f64>,
    /// Limit on active-set loops per increment.
    #[arg(long, global = true)]
    pub max_loops: Option<usize>,
    /// Initial polarization angles in degrees (nonprop, nonprop-field).
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub angle: Vec<f64>,
    /// Benchmark configuration overrides as JSON.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Load program as JSON (custom).
    #[arg(long, global = true, value_name = "FILE")]
    pub program: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::run(cli.command, &cli.opts) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_solver_failure() { 3 } else { 2 })
        }
    }
}
