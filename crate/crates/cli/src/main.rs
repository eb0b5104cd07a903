//! Command-line front end for the two-ion magnetometry simulator.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use ionmag::physics::Manifold;
use ionmag::sim::ParityOutcome;
use serde_json::Value;

use commands::SeparateArgs;

#[derive(Parser)]
#[command(name = "ionmag", version, about = "Simulate and analyse two-ion Ramsey magnetometry campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    S,
    D,
}

impl From<ManifoldArg> for Manifold {
    fn from(m: ManifoldArg) -> Self {
        match m {
            ManifoldArg::S => Manifold::S,
            ManifoldArg::D => Manifold::D,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; relative prefixes go under IONMAG_OUT_DIR when set.
        #[arg(long)]
        out: PathBuf,
        /// Independent replicas, each on its own random stream.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
    },
    /// Maximum-likelihood phase and contrast from one pair of parity counts.
    Estimate {
        #[arg(long)]
        xx_even: u32,
        #[arg(long)]
        xx_shots: u32,
        #[arg(long)]
        xy_even: u32,
        #[arg(long)]
        xy_shots: u32,
    },
    /// Expected information gain over the candidate interrogation times.
    Utility {
        #[arg(long)]
        config: PathBuf,
        /// Condition the prior on a recorded trace first.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum)]
        manifold: Option<ManifoldArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split S and D phase rates into field difference and ac shift.
    Separate {
        #[arg(long, allow_negative_numbers = true)]
        omega_s_hz: f64,
        #[arg(long, allow_negative_numbers = true)]
        omega_d_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        omega_s_err_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        omega_d_err_hz: f64,
        /// S Zeeman splitting (Hz).
        #[arg(long, default_value_t = 10.4e6)]
        nu_s_hz: f64,
        /// D splitting (Hz); by default the one set by the same field.
        #[arg(long)]
        nu_d_hz: Option<f64>,
    },
    /// Re-run the estimators on a recorded trace.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        manifold: Option<ManifoldArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json(value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    commands::emit(None, "", &bytes)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            seed,
            out,
            replicas,
        } => print_json(&commands::simulate(&config, seed, &out, replicas)?),
        Command::Estimate {
            xx_even,
            xx_shots,
            xy_even,
            xy_shots,
        } => print_json(&commands::estimate(ParityOutcome::new(xx_even, xx_shots, xy_even, xy_shots)?)?),
        Command::Utility {
            config,
            trace,
            manifold,
            out,
        } => {
            let value = commands::utility(&config, trace.as_deref(), manifold.map(Into::into))?;
            let mut bytes = serde_json::to_vec_pretty(&value)?;
            bytes.push(b'\n');
            commands::emit(out.as_deref(), "utility.json", &bytes)
        }
        Command::Separate {
            omega_s_hz,
            omega_d_hz,
            omega_s_err_hz,
            omega_d_err_hz,
            nu_s_hz,
            nu_d_hz,
        } => print_json(&commands::separate(SeparateArgs {
            omega_s_hz,
            omega_s_err_hz,
            omega_d_hz,
            omega_d_err_hz,
            nu_s_hz,
            nu_d_hz,
        })?),
        Command::Replay {
            config,
            trace,
            manifold,
            out,
        } => {
            let (bytes, summary) = commands::replay(&config, &trace, manifold.map(Into::into))?;
            commands::emit(out.as_deref(), "replay.csv", &bytes)?;
            if out.is_some() {
                print_json(&summary)?;
            }
            Ok(())
        }
    }
}
