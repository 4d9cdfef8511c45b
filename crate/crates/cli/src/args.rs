use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use efx_core::fixedpoint::FixedPointMap;
use efx_core::generate::ValueDistribution;
use serde::Serialize;

/// Decide and compute EFX allocations for linear valuations.
#[derive(Parser, Debug, Serialize)]
#[command(name = "efx", version)]
pub struct Cli {
    /// Write the output document to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Record wall-clock times. Output is then no longer reproducible byte for byte.
    #[arg(long, global = true)]
    pub timings: bool,

    /// Slack at or below which an EFX constraint counts as satisfied.
    #[arg(long, global = true, default_value_t = efx_core::EFX_TOL)]
    pub efx_tol: f64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a random instance document.
    Gen(GenArgs),
    /// Check an allocation for EFX.
    Check(CheckArgs),
    /// Enumerate every allocation.
    Oracle(OracleArgs),
    /// Minimize the Lovász relaxation and round it.
    Lovasz(LovaszArgs),
    /// Evaluate the continuous extension.
    #[command(subcommand)]
    Extension(ExtensionCommand),
    /// Run DCA on the DC program.
    Dca(DcaArgs),
    /// Run damped Picard iteration on a fixed-point map.
    Fixedpoint(FixedPointArgs),
    /// Run every method on one instance and compare against the oracle.
    Compare(CompareArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionCommand {
    /// Evaluate f and g at a dual point y or g at a fractional point x.
    Eval(EvalArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dist {
    Uniform01,
    Integer,
    IdenticalAgents,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    /// Number of agents.
    #[arg(short = 'n', long)]
    pub agents: usize,
    /// Number of items.
    #[arg(short = 'm', long)]
    pub items: usize,
    #[arg(long, value_enum, default_value_t = Dist::Uniform01)]
    pub dist: Dist,
    /// Largest value for the integer distribution.
    #[arg(long, default_value_t = 10)]
    pub max: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenArgs {
    pub fn distribution(&self) -> ValueDistribution {
        match self.dist {
            Dist::Uniform01 => ValueDistribution::Uniform01,
            Dist::Integer => ValueDistribution::Integer { max: self.max },
            Dist::IdenticalAgents => ValueDistribution::IdenticalAgents,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct CheckArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub allocation: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Number of witnesses kept in the document.
    #[arg(long, default_value_t = efx_core::oracle::DEFAULT_WITNESS_CAP)]
    pub cap: usize,
    /// Stream every witness as one JSON line, followed by a summary line.
    #[arg(long)]
    pub all: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct LovaszArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    /// Step size at iteration t is step0 / sqrt(t).
    #[arg(long, default_value_t = 0.5)]
    pub step0: f64,
    /// Number of threshold roundings of the best point.
    #[arg(long, default_value_t = 16)]
    pub roundings: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Document {"y": [[..]; m]} with a dual point.
    #[arg(long, conflicts_with = "x", required_unless_present = "x")]
    pub y: Option<PathBuf>,
    /// Document {"x": [[..]; m]} with a point of the partition polytope.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0, 1000.0])]
    pub lambdas: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct DcaArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub delta: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Start 0 is the greedy encoding; later starts are random box points.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Box size M; defaults to 2V + 1.
    #[arg(long)]
    pub m_const: Option<f64>,
    /// Also write one row per start to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
pub enum MapArg {
    #[value(name = "T")]
    T,
    #[value(name = "Tprime")]
    Tprime,
    #[value(name = "Ttilde")]
    Ttilde,
}

impl From<MapArg> for FixedPointMap {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::T => FixedPointMap::T,
            MapArg::Tprime => FixedPointMap::Tprime,
            MapArg::Ttilde => FixedPointMap::Ttilde,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FixedPointArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = MapArg::Ttilde)]
    pub map: MapArg,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Residual at which the iteration counts as converged.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Constraint slack accepted at a fixed point.
    #[arg(long, default_value_t = 1e-6)]
    pub slack_tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub m_const: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starts for each multi-start method.
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
