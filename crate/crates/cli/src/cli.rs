//! Command-line arguments. The argument structs double as run
//! configurations: they serialize into manifests and deserialize with
//! unknown keys rejected.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "gradlearn", version, about = "Gradient learning and supervised dimension reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a gradient model and write a JSON archive.
    Fit(FitArgs),
    /// Spectral reduction of a fitted model: eigenpairs and projections.
    Reduce(ReduceArgs),
    /// Draw a simulated train/test pair with its true directions.
    Simulate(SimulateArgs),
    /// kNN error on projected data and subspace agreement.
    Evaluate(EvaluateArgs),
    /// simulate, fit, reduce and evaluate in one seeded run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regress,
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Gradient outer product.
    Gop,
    /// Empirical gradient covariance.
    Egcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignArg {
    Linear,
    Hypersphere,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// CSV table, one sample per row.
    #[arg(long, conflicts_with_all = ["idx_images", "idx_labels"])]
    pub data: Option<PathBuf>,
    /// The CSV starts with a header line.
    #[arg(long)]
    pub header: bool,
    /// Zero-based label column (default: last).
    #[arg(long)]
    pub label_column: Option<usize>,
    /// IDX image file (magic 0x803).
    #[arg(long, requires = "idx_labels")]
    pub idx_images: Option<PathBuf>,
    /// IDX label file (magic 0x801).
    #[arg(long, requires = "idx_images")]
    pub idx_labels: Option<PathBuf>,
    /// Keep two digits and label them -1/+1, e.g. `3,8`.
    #[arg(long, requires = "idx_images")]
    pub digits: Option<String>,
}

impl InputArgs {
    pub fn digit_pair(&self) -> Result<Option<(u8, u8)>> {
        let Some(text) = &self.digits else {
            return Ok(None);
        };
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<u8>().ok().filter(|&d| d <= 9);
        match parts.as_slice() {
            [a, b] => match (parse(a), parse(b)) {
                (Some(a), Some(b)) if a != b => Ok(Some((a, b))),
                _ => Err(CliError::Usage(format!("--digits expects two distinct digits, got {text:?}"))),
            },
            _ => Err(CliError::Usage(format!("--digits expects `a,b`, got {text:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperArgs {
    /// Regression penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Classification penalty on the log-odds.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Classification penalty on the gradient.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Locality weight bandwidth (default: median pairwise distance).
    #[arg(long)]
    pub s: Option<f64>,
    /// Kernel width (default: 0.2 s).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Weight exponent denominator: 1 for s^2, 2 for 2 s^2.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub weight_factor: u8,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = Task::Regress)]
    pub task: Task,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Recorded in the archive provenance.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Egcm)]
    pub method: Method,
    /// Number of directions.
    #[arg(long)]
    pub k: usize,
    /// Labelled CSV to project instead of the training points.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub label_column: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Linear)]
    pub design: DesignArg,
    #[arg(long, default_value_t = 20)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 20)]
    pub n_test_per_class: usize,
    /// Ambient dimension (hypersphere design; the linear design is 100).
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    /// Sphere dimension (hypersphere design).
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Inner radius (hypersphere design).
    #[arg(long, default_value_t = 3.0)]
    pub r: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Projected training set (CSV with header, label last).
    #[arg(long)]
    pub train: PathBuf,
    /// Projected test set; omit to report only leave-one-out.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
    /// Leave-one-out kNN error on the training set.
    #[arg(long)]
    pub loo: bool,
    /// Estimated directions, p x k, no header.
    #[arg(long, requires = "truth")]
    pub directions: Option<PathBuf>,
    /// True directions, p x d, no header.
    #[arg(long, requires = "directions")]
    pub truth: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Simulation noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Classification penalties; the simulation default is 0.1.
    #[arg(long, default_value_t = 0.1)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda2: f64,
    #[arg(long)]
    pub s: Option<f64>,
    /// Kernel width.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub weight_factor: u8,
    #[arg(long, value_enum, default_value_t = Method::Egcm)]
    pub method: Method,
    /// Number of directions (default: the true dimension).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub config: PipelineConfig,
    /// Rerun the configuration recorded in a manifest and check that the
    /// eigenvalues agree within 1e-12. Other configuration flags are ignored.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}
