use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vinolab::rational::{self, serde_exact, Rational};

#[derive(Debug, Parser)]
#[command(name = "vinolab", version, about = "Vinogradov mean value and decoupling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Record file; `.jsonl` files are appended to, anything else is replaced.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// What goes to stdout: the JSON record or the result table as CSV.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Tuples enumerated by brute force.
    #[arg(long, global = true)]
    pub max_tuples: Option<u128>,
    /// Memory for counting histograms, converted to an entry limit.
    #[arg(long, global = true)]
    pub max_bytes: Option<u128>,
    /// Gauss–Legendre panels in one extension evaluation.
    #[arg(long, global = true)]
    pub max_panels: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count solutions J_{s,n}(N) of the Vinogradov system.
    Count(CountArgs),
    /// Count solutions over a separated set of real points.
    CountReal(CountRealArgs),
    /// ∫|F|^{2s} over the torus, on the exact grid or by sampling.
    TorusMoment(TorusArgs),
    /// Enumerate major-arc labels.
    Arcs(ArcsArgs),
    /// Estimate sup |F| over the minor arcs.
    MinorSup(MinorSupArgs),
    /// Branching weights α_j, β_j and the ω_1 series.
    Weights(WeightsArgs),
    /// Build the weighted iteration tree.
    Tree(TreeArgs),
    /// Solve the exponent recursion system exactly.
    Appendix(AppendixArgs),
    /// Decide ω_1(Δ, 0) > 1 exactly.
    Threshold(ThresholdArgs),
    /// One decoupling-type ratio over a trial family.
    Decouple(DecoupleArgs),
    /// Maximal decoupling ratios across δ and the fitted exponent.
    VpScan(VpScanArgs),
    /// Discrete restriction ratio for the moment curve.
    Restriction(RestrictionArgs),
    /// Ball inflation ratio for the parabola.
    Inflate(InflateArgs),
    /// Turn a set of records into a tidy CSV and a plot description.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Count(_) => "count",
            Command::CountReal(_) => "count-real",
            Command::TorusMoment(_) => "torus-moment",
            Command::Arcs(_) => "arcs",
            Command::MinorSup(_) => "minor-sup",
            Command::Weights(_) => "weights",
            Command::Tree(_) => "tree",
            Command::Appendix(_) => "appendix",
            Command::Threshold(_) => "threshold",
            Command::Decouple(_) => "decouple",
            Command::VpScan(_) => "vp-scan",
            Command::Restriction(_) => "restriction",
            Command::Inflate(_) => "inflate",
            Command::Plot(_) => "plot",
        }
    }
}

pub fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

/// A real number given exactly (`1/32`, `0.25`) or as a float (`1e-3`).
pub fn parse_real(s: &str) -> Result<f64, String> {
    match rational::parse(s) {
        Ok(q) => Ok(rational::to_f64(&q)),
        Err(_) => s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Naive,
    Mitm,
    Torus,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Hash,
    SortMerge,
}

#[derive(Debug, Args, Serialize)]
pub struct CountArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub s: u32,
    #[arg(long = "N", required_unless_present = "growth", conflicts_with = "growth")]
    #[serde(rename = "N")]
    pub range: Option<u64>,
    /// Fit the growth exponent over these values of N instead.
    #[arg(long, value_delimiter = ',')]
    pub growth: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Algo::Mitm)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = Strategy::Hash)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 16)]
    pub partitions: usize,
    /// Also write the representation histogram here and recount from it.
    #[arg(long)]
    pub spill: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CountRealArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub s: usize,
    /// Comma-separated exact points X_i with i−1 < X_i ≤ i, e.g. `1/2,3/2,3`.
    #[arg(long, value_delimiter = ',', value_parser = parse_rational, required_unless_present = "integers")]
    #[serde(with = "serde_exact::vec")]
    pub points: Vec<Rational>,
    /// Use the points 1..=N.
    #[arg(long, conflicts_with = "points")]
    pub integers: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Args, Serialize)]
pub struct TorusArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub s: u32,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub range: u64,
    #[arg(long, value_enum, default_value_t = MomentMethod::Exact)]
    pub method: MomentMethod,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ArcsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub range: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_labels: u64,
    /// Also estimate the measure of the union by sampling.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct MinorSupArgs {
    #[arg(long)]
    pub n: usize,
    /// One value estimates the supremum; several also fit its growth.
    #[arg(long = "N", value_delimiter = ',', required = true)]
    #[serde(rename = "N")]
    pub ranges: Vec<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_rational)]
    #[serde(with = "serde_exact")]
    pub p: Rational,
    /// Sum the ω_1 series over this many generations.
    #[arg(long)]
    pub series: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderArg {
    Ball,
    Generation,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_rational)]
    #[serde(with = "serde_exact")]
    pub p: Rational,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::Ball)]
    pub order: OrderArg,
    #[arg(long, default_value_t = 200_000)]
    pub max_nodes: usize,
    /// Print the indented text form of the tree instead of the record.
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AppendixArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_rational)]
    #[serde(with = "serde_exact")]
    pub delta: Rational,
    #[arg(long, value_parser = parse_rational, default_value = "0")]
    #[serde(with = "serde_exact")]
    pub theta: Rational,
    /// Sweep Δ from `--delta` to this value, recording ω_1 only.
    #[arg(long, value_parser = parse_rational)]
    #[serde(with = "serde_exact::option")]
    pub sweep_to: Option<Rational>,
    #[arg(long, default_value_t = 40, requires = "sweep_to")]
    pub steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_rational, required_unless_present = "scan_width")]
    #[serde(with = "serde_exact::option")]
    pub delta: Option<Rational>,
    /// Scan Δ = n+1 − k·width/steps for k = 0..=steps.
    #[arg(long, value_parser = parse_rational, conflicts_with = "delta")]
    #[serde(with = "serde_exact::option")]
    pub scan_width: Option<Rational>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Also run this many rounds of the substitution iteration (n ≤ 5).
    #[arg(long, requires = "delta")]
    pub iterate: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    MonteCarlo,
    Uniform,
    Grid,
}

/// Quadrature controls shared by the ratio experiments.
#[derive(Debug, Args, Serialize)]
pub struct QuadArgs {
    /// Points in each ball rule (sampled schemes).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gauss–Legendre panels per oscillation of the extension integrand.
    #[arg(long)]
    pub ppo: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, default_value_t = 16)]
    pub panels_per_axis: usize,
    /// Skip the rerun at doubled density.
    #[arg(long)]
    pub no_convergence_check: bool,
    #[arg(long)]
    pub convergence_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    Standard,
    Random,
    SingleCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityArg {
    Main,
    L2,
    LowerDim,
}

#[derive(Debug, Args, Serialize)]
pub struct DecoupleArgs {
    #[arg(long, value_enum, default_value_t = InequalityArg::Main)]
    pub inequality: InequalityArg,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 6.0, value_parser = parse_real)]
    pub p: f64,
    /// Cell width; 1/δ must be an integer.
    #[arg(long, value_parser = parse_real)]
    pub delta: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = FamilyArg::Standard)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start of the interval I (lower-dim only).
    #[arg(long, default_value = "0", value_parser = parse_real)]
    pub t0: f64,
    /// Length of the interval I (lower-dim only); defaults to the shortest
    /// union of cells at least δ^{1/2} long.
    #[arg(long, value_parser = parse_real)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct VpScanArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_real, default_value = "6,12")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_real, default_value = "1/4,1/8,1/16,1/32")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = FamilyArg::Standard)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffArg {
    Ones,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct RestrictionArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 6.0, value_parser = parse_real)]
    pub p: f64,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub range: usize,
    /// Ball radius; defaults to N^n.
    #[arg(long, value_parser = parse_real)]
    pub radius: Option<f64>,
    #[arg(long, value_enum, default_value_t = CoeffArg::Ones)]
    pub coeffs: CoeffArg,
    /// Place t_i uniformly at random in ((i−1)/N, i/N] instead of at i/N.
    #[arg(long)]
    pub jitter: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InflateArgs {
    #[arg(long, default_value_t = 6.0, value_parser = parse_real)]
    pub p: f64,
    /// Number of intervals of length 1/K.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Cells of g, that is 1/ρ.
    #[arg(long, default_value_t = 8)]
    pub cells: usize,
    #[arg(long, value_enum, default_value_t = CoeffArg::Ones)]
    pub coeffs: CoeffArg,
    /// Average over a random subset of this many cover balls.
    #[arg(long)]
    pub cover_balls: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `count --growth` records: ln N against ln J.
    Growth,
    /// `vp-scan` records: ln 1/δ against ln of the maximal ratio.
    VpScan,
    /// `appendix` records: Δ against ω_1 − 1.
    Appendix,
    /// `minor-sup` records: ln N against ln sup |F|.
    MinorSup,
}

impl PlotKind {
    pub fn subcommand(self) -> &'static str {
        match self {
            PlotKind::Growth => "count",
            PlotKind::VpScan => "vp-scan",
            PlotKind::Appendix => "appendix",
            PlotKind::MinorSup => "minor-sup",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Record files (`.json` or `.jsonl`).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub csv: PathBuf,
    /// Plot description; defaults to the CSV path with a `.plot.json` suffix.
    #[arg(long)]
    pub description: Option<PathBuf>,
}
