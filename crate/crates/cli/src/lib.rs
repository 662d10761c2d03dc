//! Command-line front end: scenario files, subcommands and their outputs.
//!
//! Every command writes into `--out-dir`:
//!
//! | command    | files                                   |
//! |------------|-----------------------------------------|
//! | `simulate` | `users.csv`, `simulate.json`            |
//! | `estimate` | `estimate.json` (+ `hits.csv` on demand) |
//! | `minimize` | `measure.csv`, `minimize.json`          |
//! | `approx`   | `profile.csv`, `approx.json`            |
//! | `analyze`  | `profile.csv`, `analysis.json`          |

pub mod commands;
pub mod scenario;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_analyze, cmd_approx, cmd_estimate, cmd_minimize, cmd_simulate, AnalyzeArgs, ApproxArgs, EstimateArgs,
    MinimizeArgs, ScenarioArgs, SimulateArgs,
};
pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<relaynet::Error> for CliError {
    fn from(e: relaynet::Error) -> Self {
        use relaynet::Error as E;
        match e {
            E::InvalidParameter(_) | E::GridMismatch(_) | E::NotOnTimeGrid(_) | E::Parse(_) | E::Empty(_) => {
                CliError::Config(e.to_string())
            }
            E::Infeasible(_) => CliError::Infeasible(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "relaynet", version, about = "Frustration events in relay-augmented cellular networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One realization: users, per-channel QoS and frustration flags.
    #[command(after_help = scenario::CONFIG_KEYS)]
    Simulate(SimulateArgs),
    /// Monte Carlo estimate of the frustration-event probability.
    #[command(after_help = scenario::CONFIG_KEYS)]
    Estimate(EstimateArgs),
    /// Minimize the relative entropy over the frustration event on the grid.
    #[command(after_help = scenario::CONFIG_KEYS)]
    Minimize(MinimizeArgs),
    /// Radial variational approximation of the direct-uplink minimizer.
    #[command(after_help = scenario::CONFIG_KEYS)]
    Approx(ApproxArgs),
    /// Radial intensity profile and angular diagnostics of dumped hits.
    #[command(after_help = scenario::CONFIG_KEYS)]
    Analyze(AnalyzeArgs),
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Minimize(a) => cmd_minimize(a),
        Command::Approx(a) => cmd_approx(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("relaynet: {e}");
            e.exit_code()
        }
    }
}
