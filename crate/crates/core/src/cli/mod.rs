//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.

mod compact;
mod eval;
mod index;
mod manifest;
mod query;
mod synth;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub use manifest::{BuilderInfo, FileDigest, GmpInfo, IndexBundle, Manifest};
pub use query::QueryLine;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const THREADS_ENV: &str = "MANIFOLD_RANK_THREADS";

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) | Error::Capability(_) => Failure::Usage(e.to_string()),
            Error::Format(_) | Error::Io(_) | Error::Json(_) => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(format!("i/o error: {e}"))
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "manifold-rank", version, about = "Diffusion ranking over mutual-kNN region graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the kNN graph, affinity matrix and pooling weights for a descriptor file.
    Index(IndexArgs),
    /// Replace every item's regions by the means of a fitted Gaussian mixture.
    Compact(CompactArgs),
    /// Rank the database for every item of a query descriptor file.
    Query(QueryArgs),
    /// Score rankings against ground truth.
    Eval(EvalArgs),
    /// Generate synthetic datasets.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuilderKind {
    Exact,
    NnDescent,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub descriptors: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub exponent: u32,
    #[arg(long, value_enum, default_value_t = BuilderKind::Exact)]
    pub builder: BuilderKind,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.001)]
    pub delta: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nodes sampled to estimate NN-descent recall.
    #[arg(long, default_value_t = 100)]
    pub recall_sample: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct CompactArgs {
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub components: usize,
    #[arg(long, default_value_t = 50)]
    pub max_em_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Sum,
    Gmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Cg,
    Jacobi,
    Dense,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// JSON-lines output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the alpha recorded in the manifest.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub k_query: usize,
    /// Largest number of nonzero query-vector entries kept; defaults to --k-query.
    #[arg(long)]
    pub global_top_k: Option<usize>,
    #[arg(long, value_enum, default_value_t = PoolingArg::Gmp)]
    pub pooling: PoolingArg,
    /// Overrides the GMP lambda recorded in the manifest.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Items re-ranked by truncated diffusion; 0 diffuses over the full graph.
    #[arg(long, default_value_t = 0)]
    pub shortlist: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Cg)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Only the first N items of every ranking are written.
    #[arg(long)]
    pub top: Option<usize>,
    /// Exit with code 3 when any solve fails to converge.
    #[arg(long)]
    pub strict: bool,
    /// Write elapsed_ms as 0 so that output is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub rankings: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Per-query AP CSV.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
    /// Baseline rankings for the size-bucket report.
    #[arg(long, requires_all = ["sizes", "report"])]
    pub baseline: Option<PathBuf>,
    /// JSON object mapping item id to relative object size.
    #[arg(long)]
    pub sizes: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Two interleaved noisy crescents lifted onto the sphere in R³.
    Crescents(CrescentArgs),
    /// Items of region descriptors with planted object regions.
    Planted(PlantedArgs),
}

#[derive(Debug, Args)]
pub struct CrescentArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Points per crescent.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_points: usize,
    /// Queries, alternating between the two crescents.
    #[arg(long, default_value_t = 10)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `x,y,score` rows for the first query on a regular grid.
    #[arg(long)]
    pub contours: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub contour_resolution: usize,
    /// Graph neighbors used for the contour diffusion.
    #[arg(long, default_value_t = 10)]
    pub contour_k: usize,
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub items_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub distractors: usize,
    #[arg(long, default_value_t = 21)]
    pub regions: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub queries_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Builds the global rayon pool, capped by `MANIFOLD_RANK_THREADS` when set.
fn init_threads() -> CmdResult {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool may already exist when run() is called repeatedly in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> CmdResult {
    init_threads()?;
    match cli.command {
        Command::Index(a) => index::run(&a),
        Command::Compact(a) => compact::run(&a),
        Command::Query(a) => query::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Synth(a) => match a.kind {
            SynthKind::Crescents(c) => synth::crescents(&c),
            SynthKind::Planted(p) => synth::planted(&p),
        },
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

pub(crate) fn warn(msg: impl fmt::Display) {
    eprintln!("warning: {msg}");
}
