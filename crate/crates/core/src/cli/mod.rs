//! Batch front end. Each subcommand computes everything in memory and then
//! writes its declared outputs together.

pub mod artifacts;
mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{ClampPolicy, Sex};
use crate::design::ModelVariant;
use crate::gibbs::{
    ErrorPrior, LocalPrior, NuWeight, DEFAULT_BURN_IN, DEFAULT_CHAINS, DEFAULT_ITERATIONS, DEFAULT_THIN,
};
use crate::inference::PredictionMode;

pub use commands::{
    run, run_check_theory, run_diagnose, run_fit, run_metrics, run_predict, run_simulate, worker_threads, TheoryReport,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GLMIXER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "glmixer",
    version,
    about = "Bayesian mixed models for death-registration completeness"
)]
pub struct Cli {
    /// More log output on standard error (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel and its latent truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a panel.
    Fit(FitArgs),
    /// Predict completeness for covariate rows from a fit.
    Predict(PredictArgs),
    /// Effective sample sizes and R-hat per parameter.
    Diagnose(DiagnoseArgs),
    /// MAE, RMSE, R-square and band metrics of predictions.
    Metrics(MetricsArgs),
    /// Shrinkage-factor probability curves by quadrature.
    CheckTheory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory (panel.csv, truth.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of units.
    #[arg(long, default_value_t = 30)]
    pub m: usize,
    /// Observations (years) per unit.
    #[arg(long = "n", default_value_t = 20)]
    pub n_per_group: usize,
    /// Model variant, 1 or 2.
    #[arg(long, default_value = "1")]
    pub model: ModelVariant,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated true coefficients in design order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Global error precision.
    #[arg(long, default_value_t = 25.0)]
    pub tau: f64,
    /// Global random-effect precision; `inf` removes the random effects.
    #[arg(long, default_value_t = 4.0)]
    pub phi: f64,
    #[arg(long, value_enum, default_value = "gamma")]
    pub error_prior: ErrorPrior,
    #[arg(long, value_enum, default_value = "gamma")]
    pub local_prior: LocalPrior,
    #[arg(long, default_value_t = 1990)]
    pub start_year: i32,
}

/// Gamma hyperparameters and the ν prior.
#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub a_phi: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub b_phi: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub a_tau: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub b_tau: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub a_zeta_eps: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub b_zeta_eps: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub a_zeta_u: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub b_zeta_u: f64,
    /// Scale of the prior weight on the Student-t degrees of freedom.
    #[arg(long, default_value_t = 2.84)]
    pub k_nu: f64,
    /// Largest degrees of freedom; the support is 1..=nu_max.
    #[arg(long, default_value_t = 30)]
    pub nu_max: u32,
    /// Form of the prior weight on ν.
    #[arg(long, value_enum, default_value = "algorithm3")]
    pub nu_weight: NuWeight,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Model variant, 1 or 2.
    #[arg(long, default_value = "1")]
    pub model: ModelVariant,
    /// Sex stream to fit: both, female or male.
    #[arg(long, default_value = "both")]
    pub sex: Sex,
    #[arg(long, value_enum, default_value = "half-cauchy")]
    pub error_prior: ErrorPrior,
    #[arg(long, value_enum, default_value = "horseshoe")]
    pub local_prior: LocalPrior,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = DEFAULT_THIN)]
    pub thin: usize,
    #[arg(long, default_value_t = DEFAULT_CHAINS)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Boundary completeness handling: reject, clamp or clamp:<eps>.
    #[arg(long, default_value = "clamp")]
    pub clamp: ClampPolicy,
    /// Year subtracted in the design; defaults to the mean year.
    #[arg(long, allow_hyphen_values = true)]
    pub year_offset: Option<f64>,
    /// Hold the global random-effect precision at this value.
    #[arg(long)]
    pub fix_phi: Option<f64>,
    /// Hold the global error precision at this value.
    #[arg(long)]
    pub fix_tau: Option<f64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit directory.
    #[arg(long)]
    pub fit: PathBuf,
    /// Covariate CSV in the panel schema; completeness may be empty.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for predictions.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "integrate")]
    pub mode: PredictionMode,
    /// Seed for random-effect draws; defaults to the fit seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Fit directory.
    #[arg(long)]
    pub fit: PathBuf,
    /// Output directory for diagnostics.csv; defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// predictions.csv or fitted.csv.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Panel CSV with observed completeness; otherwise the `observed` column is used.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    /// Sex stream of the observed panel.
    #[arg(long, default_value = "both")]
    pub sex: Sex,
    #[arg(long, default_value = "clamp")]
    pub clamp: ClampPolicy,
    /// Also report the literal R-square variant.
    #[arg(long)]
    pub paper_literal: bool,
    /// Deviation cut for the small-deviation count (strict).
    #[arg(long, default_value_t = crate::metrics::SUBNATIONAL_THRESHOLD)]
    pub threshold: f64,
    /// Output directory (metrics.json, metrics.csv).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TheoryFamily {
    Horseshoe,
    Laplace,
    StudentT,
    HalfCauchy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TheoryAxis {
    /// P(γ > ε) against the global random-effect precision.
    Phi,
    /// P(γ < ε) against the global error precision.
    Tau,
    /// P(γ < ε) against the group mean residual.
    Residual,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Output directory (theory_curve.csv, theory_report.json).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "horseshoe")]
    pub local_prior: TheoryFamily,
    #[arg(long, value_enum, default_value = "phi")]
    pub axis: TheoryAxis,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Group size.
    #[arg(long = "n", default_value_t = 10)]
    pub n: usize,
    /// Fixed λτ for the phi and residual axes.
    #[arg(long, default_value_t = 1.0)]
    pub error_precision: f64,
    /// Fixed ωφ for the tau axis.
    #[arg(long, default_value_t = 1.0)]
    pub effect_precision: f64,
    /// Within-group residual sum of squares for the tau axis; defaults to n − 1.
    #[arg(long)]
    pub within_ss: Option<f64>,
    /// Fixed φ for the residual axis.
    #[arg(long, default_value_t = 1.0)]
    pub phi: f64,
    /// Group mean residual for the phi and tau axes.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub residual: f64,
    /// Degrees of freedom of the Student-t family.
    #[arg(long, default_value_t = 4.0)]
    pub nu: f64,
    /// Grid runs from 10^grid_from to 10^grid_to; defaults to 1..6, or
    /// -1..1.5 on the residual axis.
    #[arg(long, allow_hyphen_values = true)]
    pub grid_from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_to: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub per_decade: usize,
}
