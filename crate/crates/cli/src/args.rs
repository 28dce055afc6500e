use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vsf_core::config::{Engine, OutputFormat, SubsetMode};
use vsf_core::ensemble::Scheme;
use vsf_core::forecast::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "vsf", version, about = "Variable subset forecasting experiments")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, env = "VSF_CONFIG")]
    pub config: Option<PathBuf>,

    /// Base seed for subset draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Report format: json, csv or text.
    #[arg(long, global = true)]
    pub format: Option<OutputFormat>,

    /// Worker threads; defaults to the number of available processors.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    /// Print the effective config as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, split and window a dataset; print its statistics.
    Ingest(IngestArgs),
    /// Run the partial / oracle / ensemble evaluation.
    Eval(EvalArgs),
    /// Evaluate every cell of a grid over b, tau and m.
    Sweep(SweepArgs),
    /// Cluster variables by rank correlation.
    Cluster(ClusterArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    Mixture,
    Contaminated,
    Block,
    Seasonal,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with one column per variable.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,

    /// Use a built-in synthetic dataset instead of a file.
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,

    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 7)]
    pub synthetic_seed: u64,

    /// Length override for the synthetic generator.
    #[arg(long)]
    pub synthetic_len: Option<usize>,

    /// Multiply every value by this factor before splitting.
    #[arg(long)]
    pub scale: Option<f64>,

    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub model: Option<ModelKind>,

    #[arg(long)]
    pub ridge_lambda: Option<f64>,

    #[arg(long)]
    pub subset_mode: Option<SubsetMode>,

    /// Percentage of variables observed at test time.
    #[arg(long)]
    pub k: Option<f64>,

    /// Clusters to draw from in correlated mode.
    #[arg(long)]
    pub c: Option<usize>,

    #[arg(long)]
    pub draws: Option<usize>,

    #[arg(long)]
    pub scheme: Option<Scheme>,

    /// Retrieval engine: direct or scalable.
    #[arg(long)]
    pub retrieval: Option<Engine>,

    /// With the scalable engine, also run direct retrieval and report agreement.
    #[arg(long)]
    pub verify_direct: bool,

    /// Fraction of training windows used as the retrieval corpus.
    #[arg(long)]
    pub fraction: Option<f64>,

    #[arg(long)]
    pub m: Option<usize>,

    #[arg(long)]
    pub tau: Option<f64>,

    #[arg(long)]
    pub exponent_b: Option<f64>,

    /// Disable the retrieval ensemble; only partial and oracle rows are produced.
    #[arg(long)]
    pub no_ensemble: bool,

    /// Also report the rank of the full-variable nearest neighbor.
    #[arg(long)]
    pub optimal_rank: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,

    #[arg(long, value_delimiter = ',')]
    pub b_values: Vec<f64>,

    #[arg(long, value_delimiter = ',')]
    pub tau_values: Vec<f64>,

    #[arg(long, value_delimiter = ',')]
    pub m_values: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub eps: Option<f64>,

    #[arg(long)]
    pub min_pts: Option<usize>,

    /// Emit a per-variable label CSV instead of the summary (also implied by `--format csv`).
    #[arg(long)]
    pub emit_labels: bool,
}
