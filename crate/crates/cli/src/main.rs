//! `heralded`: run heralded-entanglement scenarios and parameter sweeps.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on resource or
//! runtime errors.

mod describe;
mod output;
mod scenario;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use heralded::runner::{self, Engine, ProtocolId};
use scenario::{Format, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<heralded::Error> for CliError {
    fn from(e: heralded::Error) -> Self {
        if e.is_resource() {
            CliError::Runtime(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "heralded", version, about = "Heralded entanglement and photon-source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Scenario file (JSON).
    file: PathBuf,
    /// Master seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample this many trajectories instead of enumerating.
    #[arg(long)]
    shots: Option<u64>,
    /// Output directory; overrides the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            shots: self.shots,
            out: self.out.clone(),
            format: self.format,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run a scenario over its sweep grid.
    Sweep(RunArgs),
    /// Print the steps and inputs of a protocol.
    Describe {
        /// Protocol id, e.g. double-herald.
        protocol: String,
    },
}

fn engine_label(engine: Engine) -> String {
    match engine {
        Engine::Exact => "exact".into(),
        Engine::Sample { shots, seed } => format!("sample ({shots} shots, seed {seed})"),
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let resolved = scenario::load(&args.file)?.resolve(&args.file, &args.overrides())?;
    log::info!("running {} ({})", resolved.experiment.protocol, engine_label(resolved.engine));
    let summary = runner::run(&resolved.experiment, resolved.engine)?;
    let bytes = output::run_bytes(&summary, resolved.format)?;
    let path = output::write_atomic(&resolved.out_dir, &resolved.name, resolved.format, &bytes)?;
    println!(
        "{}: success_probability={} success_fidelity={} -> {}",
        summary.protocol,
        output::format_number(summary.success_probability),
        summary
            .success_fidelity
            .map(output::format_number)
            .unwrap_or_else(|| "n/a".into()),
        path.display()
    );
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), CliError> {
    let resolved = scenario::load(&args.file)?.resolve(&args.file, &args.overrides())?;
    let spec = resolved.sweep_spec()?;
    spec.validate()?;
    log::info!(
        "sweeping {} over {} values of {}",
        spec.base.protocol,
        spec.values.len(),
        spec.parameter.name()
    );
    let rows = runner::sweep(&spec)?;
    let bytes = output::sweep_bytes(&rows, resolved.format)?;
    let path = output::write_atomic(&resolved.out_dir, &resolved.name, resolved.format, &bytes)?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

fn describe(protocol: &str) -> Result<(), CliError> {
    let id: ProtocolId = protocol.parse().map_err(|_| {
        let known: Vec<&str> = ProtocolId::ALL.iter().map(ProtocolId::name).collect();
        CliError::Validation(format!("unknown protocol '{protocol}' (known: {})", known.join(", ")))
    })?;
    print!("{}", describe::describe(id));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Describe { protocol } => describe(protocol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "validation error",
                CliError::Runtime(_) => "runtime error",
            };
            eprintln!("heralded: {kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
