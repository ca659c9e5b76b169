use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shapealign::penalty::PenaltyKind;

#[derive(Debug, Parser)]
#[command(name = "shapealign", version, about = "Shape-based grouping for multiple functional linear regression")]
pub struct Cli {
    /// Output directory, created if missing.
    #[arg(long, global = true, env = "SHAPEALIGN_OUT_DIR", default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for replicate and grid-point parallelism; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a known grouping.
    Simulate(SimulateArgs),
    /// Compute the grouping path over a grid of penalty levels.
    Detect(DetectCmd),
    /// Fit the grouped model for a given partition.
    Fit(FitCmd),
    /// Tune the grouping by Monte Carlo cross-validation.
    Cv(CvCmd),
    /// Compare ordinary, matrix-variate, grouped and oracle models.
    Baselines(BaselinesCmd),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of basis functions per covariate.
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 201)]
    pub grid_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisChoice {
    /// Read precomputed scores.
    Scores,
    /// Project curves on the orthonormal Fourier system.
    Fourier,
    /// Project curves on the pooled eigenbasis.
    Eigen,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Directory holding scores.csv, curves.csv and responses.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BasisChoice::Scores)]
    pub basis: BasisChoice,
    /// Fourier dimension.
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    /// Fraction of pooled variance the eigenbasis must explain.
    #[arg(long, default_value_t = 0.9)]
    pub var_threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long, default_value = "mcp")]
    pub penalty: PenaltyKind,
    #[arg(long, default_value_t = 2.1)]
    pub gamma: f64,
    /// Augmented Lagrangian weight.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Explicit ascending penalty grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Size of the automatic penalty grid.
    #[arg(long, default_value_t = 30)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_primal: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_change: f64,
    /// Solve every grid point from the least-squares start.
    #[arg(long)]
    pub no_warm_start: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, default_value_t = 500)]
    pub fit_max_iter: usize,
    /// Relative objective change that stops block relaxation.
    #[arg(long, default_value_t = 1e-8)]
    pub fit_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,
    /// Grouping thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.06,0.1,0.2,0.3,0.35,0.4")]
    pub tilde_lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    /// Threshold on normalized misalignment.
    #[arg(long, default_value_t = 0.2)]
    pub tilde_lambda: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Partition file, one group of 1-based indices per line.
    #[arg(long, conflicts_with = "groups")]
    pub partition: Option<PathBuf>,
    /// Inline partition such as "1,2,3;4,5".
    #[arg(long)]
    pub groups: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Score these inline partitions instead of detecting; repeatable.
    #[arg(long)]
    pub candidate: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselinesCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    #[command(flatten)]
    pub cv: CvArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// True partition file; adds the oracle model.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Require the oracle model (needs --truth).
    #[arg(long)]
    pub oracle: bool,
}
