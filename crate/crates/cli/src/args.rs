use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use inertia_core::capability::NormOrder;

#[derive(Debug, Parser)]
#[command(name = "inertia", version, about = "Synthetic inertia and damping analysis and placement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Modal metrics and step-response trajectories for a case.
    Analyze(AnalyzeArgs),
    /// Optimise device gains for one or more placement configs.
    Place(PlaceArgs),
    /// Fit a capability ball to frequency measurements and dualise it.
    FitCapability(FitArgs),
    /// Self-checks against the ODE oracle, finite differences and brute force.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Device gains; defaults to the gains stored in the case.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Cross-check the modal trajectories against ODE integration.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Placement config; repeat to compare several cost modes.
    #[arg(long, required = true)]
    pub config: Vec<PathBuf>,
    /// Starting gains; defaults to the gains stored in the case.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    /// Minimise total device rating subject to the config bounds.
    #[arg(long)]
    pub min_capacity: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Cross-check the final trajectories against ODE integration.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Measurement CSV (`time_s,freq_dev_hz[,rocof_hz_s]`).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub measurements: Option<PathBuf>,
    /// Generate this many points of an elliptical cloud instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Norm order: 1, 2 or inf.
    #[arg(long)]
    pub p: NormOrder,
    /// Frequency scaling in 1/s.
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value_t = 1.0)]
    pub coverage: f64,
    /// Device rating P̄ in pu.
    #[arg(long)]
    pub capacity: f64,
    /// Boundary points per grid in the duality check.
    #[arg(long, default_value_t = 10_000)]
    pub resolution: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Check this case as well as the random systems.
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long, requires = "case")]
    pub gains: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random stable systems checked against the oracle.
    #[arg(long, default_value_t = 5)]
    pub systems: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
