//! `packsim` — scenario driver for the competition-system toolkit.
//!
//! ```text
//! packsim <scenario> --config <path> [--set key=value]... --out <dir>
//! packsim validate   --config <path> [--set key=value]... [--out <dir>]
//! ```
//!
//! Scenarios: `evolve`, `equilibria`, `bifurcate`, `continue`, `segregate`,
//! `packs`, `optimize`. Each run writes its artifacts plus a `manifest.json`
//! recording the merged config, seed, crate versions, output list, and wall
//! time; identical `(config, seed)` runs produce byte-identical manifests
//! except for the wall-time field.
//!
//! Exit codes: `0` success, `1` numerical failure (divergence, singular
//! linearization, step collapse), `2` configuration error (malformed JSON,
//! invalid parameters, bad overrides). Failures emit a machine-readable
//! error document to stderr and, when the output directory is available,
//! to `<out>/error.json`.

mod config;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use packsim::Error;

use crate::config::load_config;
use crate::scenarios::{run_scenario, validate_config, validate_for_scenario};

#[derive(Parser)]
#[command(
    name = "packsim",
    version,
    about = "Numerical scenarios for an N-predator / one-prey reaction-diffusion competition system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Arguments shared by every scenario subcommand.
#[derive(Args)]
struct RunArgs {
    /// JSON scenario configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path override, e.g. `--set params.beta=40` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// JSON scenario configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Optional directory for `validate.json` (diagnostics also print to
    /// stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the parabolic system and record trajectory diagnostics.
    Evolve(RunArgs),
    /// Catalog the constant equilibria with stability verdicts.
    Equilibria(RunArgs),
    /// Compute bifurcation thresholds β_n from the Neumann spectrum.
    Bifurcate(RunArgs),
    /// Trace a non-constant steady branch in β from its bifurcation point.
    #[command(name = "continue")]
    Continue(RunArgs),
    /// Trace a branch and evaluate segregation diagnostics along it.
    Segregate(RunArgs),
    /// Evaluate the stable-pack counting bound.
    Packs(RunArgs),
    /// Sweep pack counts and β for the best total predator population.
    Optimize(RunArgs),
    /// Check a config for hypothesis violations and numerical hazards.
    Validate(ValidateArgs),
}

/// Run manifest; field order is the serialization order, and the config
/// document is sorted by key, so identical inputs give identical bytes
/// everywhere except `wall_time_s`.
#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    config: &'a serde_json::Value,
    seed: u64,
    versions: Versions,
    outputs: Vec<String>,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Versions {
    packsim: &'static str,
    packsim_cli: &'static str,
}

impl Versions {
    fn current() -> Versions {
        Versions { packsim: packsim::VERSION, packsim_cli: env!("CARGO_PKG_VERSION") }
    }
}

/// A failure annotated with the phase it occurred in: configuration-phase
/// errors are usage errors regardless of their variant (a missing config
/// file is an `Io` error but still exit code 2).
struct Failure {
    error: Error,
    config_phase: bool,
}

impl Failure {
    fn exit_code(&self) -> u8 {
        if self.config_phase || self.error.is_usage() {
            2
        } else {
            1
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out_dir, result) = dispatch(cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let code = failure.exit_code();
            let report = serde_json::json!({
                "error": {
                    "kind": failure.error.kind(),
                    "message": failure.error.to_string(),
                    "exit": code,
                }
            });
            eprintln!("{report:#}");
            if let Some(dir) = out_dir {
                // Best effort: the error report is advisory, the exit code
                // and stderr are authoritative.
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = packsim::io::write_json(&dir.join("error.json"), &report);
                }
            }
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> (Option<PathBuf>, Result<(), Failure>) {
    match cli.command {
        Command::Evolve(args) => run_command("evolve", args),
        Command::Equilibria(args) => run_command("equilibria", args),
        Command::Bifurcate(args) => run_command("bifurcate", args),
        Command::Continue(args) => run_command("continue", args),
        Command::Segregate(args) => run_command("segregate", args),
        Command::Packs(args) => run_command("packs", args),
        Command::Optimize(args) => run_command("optimize", args),
        Command::Validate(args) => {
            let out = args.out.clone();
            (out, run_validate(args))
        }
    }
}

fn run_command(scenario: &str, args: RunArgs) -> (Option<PathBuf>, Result<(), Failure>) {
    let out = args.out.clone();
    let result = (|| {
        let loaded = load_config(&args.config, &args.set)
            .map_err(|error| Failure { error, config_phase: true })?;
        std::fs::create_dir_all(&args.out)
            .map_err(|e| Failure { error: Error::Io(e), config_phase: true })?;
        // A rerun into the same directory must not leave a stale failure
        // report next to fresh artifacts.
        let _ = std::fs::remove_file(args.out.join("error.json"));

        let started = Instant::now();
        let outputs = run_scenario(scenario, &loaded.config, &args.out)
            .map_err(|error| Failure { error, config_phase: false })?;

        let manifest = Manifest {
            scenario,
            config: &loaded.document,
            seed: loaded.config.seed.unwrap_or(0),
            versions: Versions::current(),
            outputs,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        packsim::io::write_json(&args.out.join("manifest.json"), &manifest)
            .map_err(|error| Failure { error, config_phase: false })?;
        Ok(())
    })();
    (Some(out), result)
}

fn run_validate(args: ValidateArgs) -> Result<(), Failure> {
    let loaded = load_config(&args.config, &args.set)
        .map_err(|error| Failure { error, config_phase: true })?;
    let mut diagnostics = validate_config(&loaded.config);
    validate_for_scenario(&loaded.config, &mut diagnostics);

    let document = serde_json::json!({ "diagnostics": diagnostics });
    println!("{document:#}");
    if let Some(dir) = &args.out {
        write_validate(dir, &document).map_err(|error| Failure { error, config_phase: false })?;
    }
    Ok(())
}

fn write_validate(dir: &Path, document: &serde_json::Value) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    packsim::io::write_json(&dir.join("validate.json"), document)
}
