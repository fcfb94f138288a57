mod artifacts;
mod svg;

use clap::{Args, Parser, Subcommand};
use metastable::config::RunConfig;
use metastable::error::ErrorClass;
use metastable::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Metastable distributions of nonlinear random perturbations.
#[derive(Parser)]
#[command(name = "metastable", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria, rate curves, hierarchy and limit profiles.
    Analyze(Common),
    /// Compare the profiles with the PDE and the SDE ensemble.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Fail instead of running the analysis when its artifacts are missing.
        #[arg(long)]
        no_implicit: bool,
    },
    /// Figure-ready series and an SVG plot of the profiles.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_implicit: bool,
    },
    /// Print and store the hierarchy of cycles.
    Hierarchy(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: two-well, two-well-linear, linear-symmetric,
    /// three-well, general, bifurcation.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for all random streams (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => return Err(Error::Config("give --config or --preset".into())),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Process exit status for failed acceptance thresholds.
const EXIT_ACCEPTANCE: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Assumption => 3,
        ErrorClass::Numeric => 4,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze(c) => {
            let cfg = c.load()?;
            let a = artifacts::analyze(&cfg)?;
            print!("{}", artifacts::analysis_summary(&a));
            Ok(0)
        }
        Command::Verify { common, no_implicit } => {
            let cfg = common.load()?;
            let run = artifacts::verify(&cfg, no_implicit)?;
            print!("{}", run.summary());
            Ok(if run.passed() { 0 } else { EXIT_ACCEPTANCE })
        }
        Command::PlotData { common, no_implicit } => {
            let cfg = common.load()?;
            let files = artifacts::plot_data(&cfg, no_implicit)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(0)
        }
        Command::Hierarchy(c) => {
            let cfg = c.load()?;
            print!("{}", artifacts::hierarchy(&cfg)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
