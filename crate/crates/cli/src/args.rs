//! Command-line flags. Column indices in `--tested` and `--exog` are
//! 1-based and refer to the `x1..xp` columns of the input file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ivtest",
    version,
    about = "Non-Studentized Anderson-Rubin-type IV tests with simulated critical values"
)]
pub struct Cli {
    /// Flat `key=value` file; every key mirrors a flag of the chosen
    /// command, and flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test the simple hypothesis θ = θ₀ in the linear mean model.
    #[command(args_override_self = true)]
    Test(TestArgs),
    /// Test θ = θ₀ in the linear quantile model P(U ≤ 0 | Z) = a_Q.
    #[command(args_override_self = true)]
    TestQuantile(QuantileTestArgs),
    /// Test a composite hypothesis fixing some coefficients.
    #[command(args_override_self = true)]
    Composite(CompositeArgs),
    /// Specification test of the linear model over a parameter box.
    #[command(args_override_self = true)]
    Spec(SpecArgs),
    /// Quantile version of `spec`.
    #[command(args_override_self = true)]
    SpecQuantile(SpecQuantileArgs),
    /// Classical Anderson-Rubin F test.
    #[command(args_override_self = true)]
    Ar(ArArgs),
    /// Finite-sample bound on the error in rejection probability.
    #[command(args_override_self = true)]
    Bound(BoundArgs),
    /// Monte Carlo rejection rates for a published table or a custom cell.
    #[command(args_override_self = true)]
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Input CSV with columns y, x1..xp, z1..zq.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Simulation draws R for the critical value.
    #[arg(long, default_value_t = ivtest::critical::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Multistart count (doubled for quantile objectives).
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Box `lo:hi` per coordinate of θ, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_interval, allow_hyphen_values = true)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hypothesised θ₀ (defaults to zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct QuantileTestArgs {
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long = "a-q", default_value_t = 0.5)]
    pub a_q: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CompositeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Tested coefficients (1-based x column indices).
    #[arg(long, value_delimiter = ',', required = true)]
    pub tested: Vec<usize>,
    /// Hypothesised values of the tested coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub g0: Vec<f64>,
    /// Evaluate at the restricted estimate, searching only when close.
    #[arg(long)]
    pub shortcut: bool,
    /// Use the quantile moment at this level.
    #[arg(long = "a-q")]
    pub a_q: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Parameter box `lo:hi` per coordinate, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_interval, allow_hyphen_values = true, required = true)]
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct SpecQuantileArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long = "a-q", default_value_t = 0.5)]
    pub a_q: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ArArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Hypothesised coefficients of the non-exogenous x columns.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// Exogenous x columns (1-based), partialled out.
    #[arg(long, value_delimiter = ',')]
    pub exog: Vec<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub m3: Option<f64>,
    #[arg(long = "c-sigma")]
    pub c_sigma: Option<f64>,
    #[arg(long)]
    pub t: f64,
    /// Estimate ℓ, m₃ and C_Σ (and take n, q) from --data at --theta0.
    #[arg(long)]
    pub estimate: bool,
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    #[arg(long = "a-q")]
    pub a_q: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Null,
    Simple,
    Composite,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    /// Published table 1–5; omit to run a single custom cell.
    #[arg(long)]
    pub table: Option<u8>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ivtest::critical::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// β₀ for simple designs, β₁ = β₂ for composite ones.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 0.75)]
    pub rho: f64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
    Ok((lo, hi))
}
