use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hopfix::experiments::Spacing;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "hopfix", version, about = "Fixed points of continuous Hopfield networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Base seed; per-task seeds are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file. Standard output when omitted; a manifest is written next to the file.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Use pattern files as given, without scaling columns to unit norm.
    #[arg(long, global = true)]
    pub no_normalize: bool,
    /// Singular-value placement for distorted bases.
    #[arg(long, global = true, value_enum, default_value_t = SpacingArg::Linear)]
    pub spacing: SpacingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingArg {
    Linear,
    Geometric,
}

impl From<SpacingArg> for Spacing {
    fn from(s: SpacingArg) -> Self {
        match s {
            SpacingArg::Linear => Spacing::Linear,
            SpacingArg::Geometric => Spacing::Geometric,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Minimum of h_{n,k} over (0, 1/k) for each n.
    Thresholds(ThresholdsArgs),
    /// All fixed points of the softmax with stability labels.
    SimplexCatalog(CatalogArgs),
    /// Monte-Carlo CIPS statistics on distorted bases.
    CipsTable(CipsTableArgs),
    /// Smallest grid beta at which the isolated Miranda check passes, per face.
    BetaSearch(BetaSearchArgs),
    /// Orbits of random points under the map, with their limits.
    Dynamics(DynamicsArgs),
    /// Multi-start fixed-point search with stability labels.
    Fixpoints(FixpointsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5, 6, 10, 100, 500, 1000])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CatalogArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub beta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CipsTableArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 50])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 6.0])]
    pub kappa: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 7, 15])]
    pub face_sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub faces: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BetaSearchArgs {
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 7])]
    pub face_sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub faces: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 40.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta_step: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.8, 0.9, 0.95])]
    pub lambdas: Vec<f64>,
    /// Samples per facet for the Miranda check.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Samples per face for the margin estimate.
    #[arg(long, default_value_t = 10_000)]
    pub margin_samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PatternSource {
    /// Pattern file: header "d n", then one pattern of d reals per line.
    #[arg(long, conflicts_with = "identity")]
    pub patterns: Option<PathBuf>,
    /// Use the standard basis of R^N.
    #[arg(long)]
    pub identity: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DynamicsArgs {
    #[command(flatten)]
    pub source: PatternSource,
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 3000)]
    pub points: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 4, 7])]
    pub snapshots: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Companion file for the fixed-point records.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixpointsArgs {
    #[command(flatten)]
    pub source: PatternSource,
    #[arg(long)]
    pub beta: f64,
    /// Largest face size whose barycenters seed the search.
    #[arg(long, default_value_t = 4)]
    pub max_face_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub random_points: usize,
}
