mod commands;
mod manifest;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfqkd_core::ProtocolVariant;

use crate::overrides::Overrides;

#[derive(Debug, Parser)]
#[command(name = "tfqkd", version, about = "Finite-size key rates for asymmetric sending-or-not-sending twin-field QKD")]
struct Cli {
    /// Configuration file of `name = value` lines.
    #[arg(long, global = true, env = "TFQKD_CONFIG")]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file (JSON for rate/optimize, CSV for scan/table2).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Key rate for the configured parameters.
    Rate {
        #[arg(long)]
        variant: Option<ProtocolVariant>,
    },
    /// Optimize the source parameters for the configured channel.
    Optimize {
        #[arg(long)]
        variant: Option<ProtocolVariant>,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        evaluations: usize,
    },
    /// Optimized rate along a distance grid with a fixed length difference.
    Scan {
        #[arg(long = "delta-km", default_value_t = 50.0, allow_negative_numbers = true)]
        delta_km: f64,
        #[arg(long = "la-from", default_value_t = 0.0, allow_negative_numbers = true)]
        la_from: f64,
        #[arg(long = "la-to", default_value_t = 300.0, allow_negative_numbers = true)]
        la_to: f64,
        #[arg(long = "la-step", default_value_t = 25.0, allow_negative_numbers = true)]
        la_step: f64,
        /// Variants to scan; all three when omitted.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<ProtocolVariant>,
    },
    /// Optimize every cell of the reference rate table and compare.
    Table2,
    /// Check the analytic rates against the Monte Carlo simulator.
    Verify {
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        #[arg(long)]
        variant: Option<ProtocolVariant>,
        /// Multiplies the dark-count probability used by the analytic model.
        #[arg(long = "fault-dark-rate", hide = true)]
        fault_dark_rate: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
