//! `bellcheck`: simulate photonic CHSH runs, analyze record files and
//! tabulate systematic budgets and parameter sweeps.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "bellcheck",
    version,
    about = "Simulation and nonsignaling analysis of CHSH experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed overriding the one in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a run and write its records as JSON Lines.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate S, its uncertainties and the apparent signaling of a record file.
    Analyze {
        #[arg(long)]
        records: PathBuf,
        /// Configuration for the systematic budget when the records carry no
        /// metadata sidecar.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze growing prefixes of a record file every `step` seconds.
    Series {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Motor-precision systematic uncertainty of S.
    Budget {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plate positioning precision of both stations (degrees).
        #[arg(long)]
        motor_sigma_deg: Option<f64>,
        /// Number of sweeps through the settings.
        #[arg(long)]
        reps: Option<u32>,
        /// Written to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Balance the detector arms with the variable attenuators.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat simulate and analyze over values of one configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted configuration key, e.g. `alice.detector_eff[1]`.
        #[arg(long)]
        param: String,
        /// Comma-separated values of the key.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Independent runs per value, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status of a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    use bellcheck::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. }) => 4,
        Some(Error::Io(_)) | Some(Error::Json(_)) => 1,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, out } => commands::simulate(common.config.as_deref(), common.seed, &out),
        Command::Analyze { records, config, out } => commands::analyze(&records, config.as_deref(), &out),
        Command::Series { records, step, out } => commands::series(&records, step, &out),
        Command::Budget {
            config,
            motor_sigma_deg,
            reps,
            out,
        } => commands::budget(config.as_deref(), motor_sigma_deg, reps, out.as_deref()),
        Command::Calibrate { common, out } => commands::calibrate(common.config.as_deref(), common.seed, &out),
        Command::Sweep {
            common,
            param,
            values,
            runs,
            out,
        } => commands::sweep(common.config.as_deref(), common.seed, &param, &values, runs, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
