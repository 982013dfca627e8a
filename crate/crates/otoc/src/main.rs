use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otoc::config::{Method, RunConfig};
use otoc::{CliError, Command, RunOptions, SweepMethod};

#[derive(Parser)]
#[command(
    name = "otoc",
    version,
    about = "Classical, RPMD and quantum OTOCs of a chaotic double well"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, `section.key=value` (bare keys address [run]).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: run.output_dir).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads; falls back to OTOC_WORKERS, then run.workers.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Tabulate the potential and its stationary points.
    PotentialScan(Common),
    /// Classical thermal OTOC at run.temperature.
    ClassicalOtoc(Common),
    /// RPMD thermal OTOC at run.temperature.
    RpmdOtoc(Common),
    /// Exact Kubo OTOC on the [grid] at run.temperature.
    QuantumOtoc(Common),
    /// Microcanonical OTOC on the shell energy_per_bead (one bead: classical).
    MicroOtoc(Common),
    /// Classical Poincaré section at y = 0.
    Poincare(Common),
    /// Centroid Poincaré section on the ring-polymer shell.
    CentroidPoincare(Common),
    /// Instantons, Hessian index and the eta bound chain.
    Instanton(Common),
    /// Husimi section of one eigenstate.
    Husimi(Common),
    /// Radius-of-gyration histogram and filtered centroid section.
    Gyration(Common),
    /// Lyapunov exponents over run.temperatures with a bound report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// OTOC method (default: run.method, else rpmd).
        #[arg(long, value_enum)]
        method: Option<SweepMethod>,
        /// Reuse temperatures finished by an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Check a configuration without running it.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Apply the checks of this method (default: run.method).
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(sub: Sub) -> Result<(), CliError> {
    let (cmd, common, resume) = match sub {
        Sub::PotentialScan(c) => (Command::PotentialScan, c, false),
        Sub::ClassicalOtoc(c) => (Command::ClassicalOtoc, c, false),
        Sub::RpmdOtoc(c) => (Command::RpmdOtoc, c, false),
        Sub::QuantumOtoc(c) => (Command::QuantumOtoc, c, false),
        Sub::MicroOtoc(c) => (Command::MicroOtoc, c, false),
        Sub::Poincare(c) => (Command::Poincare, c, false),
        Sub::CentroidPoincare(c) => (Command::CentroidPoincare, c, false),
        Sub::Instanton(c) => (Command::Instanton, c, false),
        Sub::Husimi(c) => (Command::Husimi, c, false),
        Sub::Gyration(c) => (Command::Gyration, c, false),
        Sub::Sweep {
            common,
            method,
            resume,
        } => {
            let cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
            let m = match method {
                Some(m) => m,
                None => SweepMethod::from_method(cfg.run.method)?,
            };
            return execute(Command::Sweep(m), &cfg, &common, resume);
        }
        Sub::Validate { common, method } => {
            let cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
            let report = cfg.validate(method)?;
            for n in &report.notes {
                println!("note: {n}");
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            println!("configuration valid ({} warnings)", report.warnings.len());
            return Ok(());
        }
    };
    let cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    execute(cmd, &cfg, &common, resume)
}

fn execute(cmd: Command, cfg: &RunConfig, common: &Common, resume: bool) -> Result<(), CliError> {
    let opts = RunOptions {
        workers: common.workers,
        output_dir: common.output.clone(),
        resume,
    };
    let manifest = otoc::run(cmd, cfg, &opts)?;
    let dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir));
    let summary = std::fs::read_to_string(dir.join(otoc::output::SUMMARY)).unwrap_or_default();
    print!("{summary}");
    println!(
        "wrote {} files to {}",
        manifest.outputs.len(),
        dir.display()
    );
    Ok(())
}
