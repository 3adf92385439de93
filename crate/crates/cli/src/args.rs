use std::path::PathBuf;

use blocksel_core::{GradientMode, PerturbMode, SolverConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Feature d values reported by default.
pub const DEFAULT_D: [usize; 5] = [16, 64, 128, 200, 600];

#[derive(Debug, Parser)]
#[command(name = "blocksel", version, about = "Block-model guided unsupervised feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic planted-partition dataset with ground-truth labels.
    Generate(GenerateArgs),
    /// Fit candidate block models on the structural graph and rank them by RRE.
    Blockmodel(BlockmodelArgs),
    /// Learn feature scores guided by a block model.
    Select(SelectArgs),
    /// Cluster on the top-d features and report ACC/NMI.
    Evaluate(EvaluateArgs),
    /// Run selection and evaluation over a grid of composition ratios and sparsity weights.
    Sweep(SweepArgs),
    /// Measure how far scores move when the block allocation is perturbed.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    /// Composition ratio between the two normalized gradients, in [0, 1].
    #[arg(long, default_value_t = 0.6)]
    pub beta_bar: f64,
    /// Sparsity weight.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Constant step size.
    #[arg(long, default_value_t = 1e-2)]
    pub eta: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Stop once |Δ(L_b + L_m)| stays below this for 10 iterations.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// `analytic` (log(Q/P) + 1) or `paper_literal` (log(Q/P) + P).
    #[arg(long, default_value_t = GradientMode::Analytic)]
    pub gradient_mode: GradientMode,
    /// Offset added to image-matrix entries before row normalization.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}

impl SolverArgs {
    pub fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            beta_bar: self.beta_bar,
            gamma: self.gamma,
            eta: self.eta,
            max_iterations: self.max_iters,
            tolerance: self.tolerance,
            gradient_mode: self.gradient_mode,
            delta: self.delta,
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "planted")]
    pub name: String,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub d_informative: usize,
    #[arg(long, default_value_t = 80)]
    pub d_noise: usize,
    #[arg(long, default_value_t = 0.3)]
    pub intra_p: f64,
    #[arg(long, default_value_t = 0.02)]
    pub inter_p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BlockmodelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Block count; defaults to the number of classes.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of candidates, seeded `seed..seed + count`.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub onmtf_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    /// Block model JSON written by `blockmodel`.
    #[arg(long)]
    pub blockmodel: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    /// Scores JSON written by `select`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Selected feature counts (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_D)]
    pub d: Vec<usize>,
    /// K-means runs per d, seeded `seed..seed + runs`.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the all-features baseline row.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub onmtf_iters: usize,
    /// Composition ratio grid (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
    pub beta_bar: Vec<f64>,
    /// Sparsity weight grid (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])]
    pub gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_D)]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub eta: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = GradientMode::Analytic)]
    pub gradient_mode: GradientMode,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SweepArgs {
    pub fn config(&self, beta_bar: f64, gamma: f64) -> SolverConfig {
        SolverConfig {
            beta_bar,
            gamma,
            eta: self.eta,
            max_iterations: self.max_iters,
            tolerance: self.tolerance,
            gradient_mode: self.gradient_mode,
            delta: self.delta,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub blockmodel: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fractions of nodes to reallocate (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
    pub fractions: Vec<f64>,
    /// `keep_m`, `recompute_m` or both (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [PerturbMode::KeepImage, PerturbMode::RecomputeImage])]
    pub modes: Vec<PerturbMode>,
    /// Repeats per (fraction, mode); repeat i uses seed + i.
    #[arg(long, default_value_t = 5)]
    pub repeats: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
