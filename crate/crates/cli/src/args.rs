use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Distance-to-measure estimation, error bounds and Monte-Carlo experiments.
#[derive(Debug, Clone, Parser)]
#[command(name = "dtem", version)]
pub struct Cli {
    /// Master seed; a fresh one is drawn and recorded when omitted
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on it)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving every output file and the manifest
    #[arg(long, global = true, default_value = "dtem-out")]
    pub out_dir: PathBuf,
    /// Flat `key = value` file; command-line flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw a sample from a shape and noise model
    Sample(SampleArgs),
    /// Evaluate the DTEM of a point cloud at one point or on a grid
    Dtm(DtmArgs),
    /// Monte-Carlo error curve and Ψ̃ curve for one configuration
    Curve(CurveArgs),
    /// Sweep the deviation, expectation, Le Cam and stability bounds
    Bounds(BoundsArgs),
    /// Compare empirical-process inequalities with simulated tails
    VerifyProcess(VerifyArgs),
    /// Run a built-in experiment under the three noise models
    Reproduce(ReproduceArgs),
    /// Rerun the command recorded in a manifest with its seed
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// e.g. "segment 0 1", "2d-shape", "tangle-cube", "polygon 0,0 1,0 0,1"
    #[arg(long)]
    pub shape: Option<String>,
    /// "noiseless", "clutter 0.1" or "gaussian 0.5"
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// csv or xyz
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DtmArgs {
    /// Point cloud file (.csv or .xyz)
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Observation point, comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Mass parameter in (0,1]
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Evaluate at every point of this cloud instead of `--x`; writes field.csv
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated masses, or "default"
    #[arg(long)]
    pub m_grid: Option<String>,
    /// Reference sample size (default 100·n, at least 10⁴)
    #[arg(long)]
    pub n_ref: Option<usize>,
    /// Skip the doubled-reference convergence check
    #[arg(long)]
    pub no_reference_check: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// Tabulated quantile CSV, or "uniform" for the unit segment seen from an endpoint
    #[arg(long)]
    pub quantile: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated neighbour counts (default: powers of two below n/2)
    #[arg(long)]
    pub k: Option<String>,
    /// Absolute constant of the expectation bounds
    #[arg(long)]
    pub c: Option<f64>,
    /// Comma-separated deviation levels (default: 20 geometric points in [1e-3, 1])
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Mass below which the modulus is controlled; enables the unbounded-support bounds
    #[arg(long)]
    pub m_bar: Option<f64>,
    /// Constant of the unbounded expectation bound
    #[arg(long)]
    pub c_xrm: Option<f64>,
    /// "c nu": covering numbers N(D,t) ≤ c·t^(−nu); enables the sup-norm bound
    #[arg(long)]
    pub covering: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Comma-separated sample sizes
    #[arg(long)]
    pub n: Option<String>,
    /// Comma-separated t₀ / u₀ values
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    /// segment, 2d-shape or tangle-cube
    pub name: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub m_grid: Option<String>,
    #[arg(long)]
    pub n_ref: Option<usize>,
    #[arg(long)]
    pub no_reference_check: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
