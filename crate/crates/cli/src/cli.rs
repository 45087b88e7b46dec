use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SchemeName};

#[derive(Debug, Parser)]
#[command(name = "lcap", version, about = "Local capacity of wireless ad hoc networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the capacity of one scheme and print a result row.
    Capacity(RunFlags),
    /// Sweep beta at fixed alpha and alpha at fixed beta for several schemes.
    Sweep {
        /// TOML file with [sweep] and [run] sections.
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Trace one reception contour and write it as CSV plus a JSON sidecar.
    Trace {
        #[command(flatten)]
        flags: RunFlags,
        /// Transmitter CSV (`x,y` rows) to use instead of a generated set.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Transmitter to trace; defaults to the one nearest the origin.
        #[arg(long)]
        index: Option<usize>,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunFlags {
    /// grid:square, grid:hex, grid:tri, aloha, aloha-mc, coloring or csma.
    #[arg(long)]
    pub scheme: Option<SchemeName>,
    /// SIR threshold, linear.
    #[arg(long)]
    pub beta: Option<f64>,
    /// SIR threshold in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_db: Option<f64>,
    /// Path-loss exponent, above 2.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Grid spacing or coloring distance in meters; ALOHA uses 1/d^2.
    #[arg(long)]
    pub d: Option<f64>,
    /// Carrier-sense threshold; defaults to the power one interferer
    /// delivers at 1e-5^-1/4 m.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Contour step in meters; defaults to 0.01 per 25 m of spacing.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Side of the square region in meters.
    #[arg(long)]
    pub region: Option<f64>,
    /// Output file (capacity), directory (sweep) or path prefix (trace).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// 10 km region and 10000 samples unless set explicitly.
    #[arg(long)]
    pub full_scale: bool,
    /// TOML file whose [run] section supplies defaults for these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl RunFlags {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            scheme: self.scheme,
            beta: self.beta,
            beta_db: self.beta_db,
            alpha: self.alpha,
            d: self.d,
            theta: self.theta,
            dt: self.dt,
            samples: self.samples,
            seed: self.seed,
            region: self.region,
            out: self.out.clone(),
            full_scale: self.full_scale.then_some(true),
        }
    }
}
