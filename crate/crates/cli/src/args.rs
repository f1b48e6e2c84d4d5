use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chisq-eb", version, about = "Empirical Bayes effect sizes for chi-squared statistics")]
pub struct Cli {
    /// Worker threads; 1 runs the serial path. Defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for outputs without an explicit path.
    #[arg(long, global = true, env = "CHISQ_EB_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior mean, variance and interval for every statistic.
    Estimate(EstimateArgs),
    /// Benjamini-Hochberg selection report.
    Bh(BhArgs),
    /// Run a named experiment.
    Simulate(SimulateArgs),
    /// Adjustment curves under a known prior.
    Curves(CurvesArgs),
    /// Fit the marginal log-density derivatives and save them as JSON.
    FitGradients(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    ScoreMatching,
    Lindsey,
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Degrees of freedom for rows without a k column.
    #[arg(long)]
    pub k: Option<f64>,

    #[arg(long, value_enum, default_value = "score-matching")]
    pub method: Method,

    /// Prior for `--method exact`: null, degenerate:L, gamma:SHAPE,SCALE,
    /// exponential:RATE, mixture:PI0:<prior>, or JSON.
    #[arg(long)]
    pub prior: Option<String>,

    /// Cross-validation seed for fitted methods.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Spline size (score matching) or polynomial degree (Lindsey).
    #[arg(long)]
    pub basis_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(short, long)]
    pub input: PathBuf,

    /// Output CSV; a `.meta.json` sidecar is written next to it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Saved gradient model to use instead of fitting.
    #[arg(long, conflicts_with = "prior")]
    pub gradients: Option<PathBuf>,

    #[arg(long, default_value_t = 0.9)]
    pub level: f64,

    /// Null proportion for the local fdr adjustment, or `auto`.
    #[arg(long)]
    pub pi0: Option<String>,

    /// Level for posterior significance.
    #[arg(long, default_value_t = 0.1)]
    pub significance: f64,
}

#[derive(Debug, Args)]
pub struct BhArgs {
    #[arg(short, long)]
    pub input: PathBuf,

    #[arg(short, long)]
    pub output: Option<PathBuf>,

    #[arg(long)]
    pub k: Option<f64>,

    /// FDR level.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Fig4,
    Fig5,
    Xor,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Repetitions (fig4) or cases (fig5); scenario default when omitted.
    #[arg(long)]
    pub reps: Option<usize>,

    /// Skip the fitted-gradient variant.
    #[arg(long)]
    pub no_fitted: bool,

    /// Skip the NT baseline.
    #[arg(long)]
    pub no_nt: bool,

    /// XOR sample size.
    #[arg(long, default_value_t = 300)]
    pub n: usize,

    /// XOR variable count.
    #[arg(long, default_value_t = 100)]
    pub p: usize,

    /// JSON report; a CSV table is written next to it.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long, default_value = "exponential:0.25")]
    pub prior: String,

    #[arg(long, default_value_t = 7.0)]
    pub k: f64,

    #[arg(long, default_value_t = 0.1)]
    pub x_min: f64,

    #[arg(long, default_value_t = 40.0)]
    pub x_max: f64,

    #[arg(long, default_value_t = 400)]
    pub points: usize,

    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(short, long)]
    pub input: PathBuf,

    #[arg(short, long)]
    pub output: Option<PathBuf>,

    #[command(flatten)]
    pub model: ModelArgs,
}
