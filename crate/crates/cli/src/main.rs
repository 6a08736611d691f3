use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vsys_core::ensemble::Execution;
use vsys_core::scenario::{self, RunOptions, ScenarioConfig};
use vsys_core::Error;

/// Stochastic simulator of a closed V system driven by two uncorrelated
/// partially coherent fields.
#[derive(Debug, Parser)]
#[command(name = "vsys", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the number of trajectories (or field realizations).
    #[arg(long, global = true)]
    trajectories: Option<usize>,

    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    /// Directory receiving CSV and manifest files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Replace existing output files instead of failing.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a TOML scenario file, or re-run a JSON run manifest.
    Run { config: PathBuf },
    /// Run every scenario of a named preset.
    Preset { name: String },
    /// List the available presets.
    ListPresets,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let configs: Vec<ScenarioConfig> = match &cli.command {
        Command::ListPresets => {
            print!("{}", scenario::list_presets());
            return Ok(());
        }
        Command::Run { config } => {
            // unreadable or malformed files are configuration errors
            let c = ScenarioConfig::from_path(config).map_err(|e| match e {
                Error::Io(io) => Error::Config {
                    field: config.display().to_string(),
                    message: io.to_string(),
                },
                Error::Json(j) => Error::Config {
                    field: config.display().to_string(),
                    message: j.to_string(),
                },
                other => other,
            })?;
            vec![c]
        }
        Command::Preset { name } => scenario::preset(name)?.configs,
    };
    let configs: Vec<ScenarioConfig> = configs
        .into_iter()
        .map(|c| c.with_overrides(cli.seed, cli.trajectories))
        .collect();
    // Validate everything before spending time on the first run.
    for c in &configs {
        c.validate()?;
    }
    let opts = RunOptions {
        out_dir: cli.out_dir.clone(),
        overwrite: cli.overwrite,
        execution: Execution::from_workers(cli.workers.map(|w| w as usize)),
    };
    for c in &configs {
        let outcome = scenario::run_scenario(c, &opts)?;
        println!("{}: wrote {}", c.name, outcome.manifest.display());
        for f in &outcome.files {
            println!("  {}", f.display());
        }
        if let Some(report) = &outcome.convergence {
            let flag = match report.half_sample_passed {
                Some(true) => "passed",
                Some(false) => "FAILED",
                None => "skipped",
            };
            println!("  half-sample check {flag} ({} groups)", report.n_groups);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
