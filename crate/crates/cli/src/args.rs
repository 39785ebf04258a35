use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ucorr::{Coefficient, RelationKind};

#[derive(Debug, Parser)]
#[command(name = "ucorr", version, about = "Tree-ensemble dependence coefficient and independence test")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the coefficient and a p-value for a two-column file.
    Compute(ComputeArgs),
    /// Null-distribution histogram on independent data, with the predicted normal overlay.
    Nulldist(NullDistArgs),
    /// Power against synthetic relationships over a noise grid.
    Power(PowerArgs),
    /// Runtime of the coefficient over a grid of sample sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    /// Number of trees.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Leaves per tree [default: min(ceil(sqrt(n)), 64)].
    #[arg(long)]
    pub leaves: Option<usize>,
    /// Minimum leaf width in ranks [default: ceil(0.03 n)].
    #[arg(long)]
    pub min_leaf_width: Option<u32>,
    /// Random split points tried per leaf.
    #[arg(long, default_value_t = 10)]
    pub split_trials: usize,
    /// Fraction of trees grown with semi-random splits.
    #[arg(long, default_value_t = 0.5)]
    pub random_split_fraction: f64,
    /// Null variance inflation constant.
    #[arg(long, default_value_t = 0.5)]
    pub k_bias: f64,
    /// Seed for every random draw; equal seeds give identical output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PValueArg {
    Analytic,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ComputeArgs {
    /// Delimited text file with one (x, y) pair per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Field delimiter: a single character, or 'tab'.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// Treat the first non-blank row as a header.
    #[arg(long)]
    pub has_header: bool,
    /// 1-based column holding x.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub x_col: u64,
    /// 1-based column holding y.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub y_col: u64,
    /// Permuted subset size [default: min(2000, n(n-1))].
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Normal approximation under independence, or a label-permutation test.
    #[arg(long, value_enum, default_value_t = PValueArg::Analytic)]
    pub pvalue: PValueArg,
    /// Permutations for --pvalue permutation.
    #[arg(long, default_value_t = 99)]
    pub permutations: usize,
    /// Report format on standard output.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct NullDistArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    /// Relationship kinds, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub relation: Vec<RelationKind>,
    /// Coefficients, comma separated (ucorr, pearson, spearman).
    #[arg(long = "coeff", value_delimiter = ',', default_value = "ucorr")]
    pub coeff: Vec<Coefficient>,
    /// Noise levels as start:stop:step (inclusive) or a comma list.
    #[arg(long, default_value = "0:100:25")]
    pub noise: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000,16000")]
    pub sizes: Vec<usize>,
    /// Timed runs per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value = "circle")]
    pub relation: RelationKind,
    #[arg(long, default_value_t = 20.0)]
    pub noise: f64,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
