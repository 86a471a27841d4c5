//! `tpca`: generate spiked tensors, run recovery algorithms, sweep
//! experiment grids and run the numerical checks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tpca_core::algorithms::AlgorithmTag;
use tpca_core::harness::Format;
use tpca_core::Error;

#[derive(Parser)]
#[command(name = "tpca", version, about = "Tensor PCA recovery experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Raise the tensor dimension cap (default 512).
    #[arg(long, global = true, value_name = "N")]
    max_n_override: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a spiked instance and write it as a TPC3 file plus JSON sidecar.
    Gen(GenArgs),
    /// Run one algorithm on a stored tensor.
    Recover(RecoverArgs),
    /// Success-rate grid over (n, tau).
    Grid(GridArgs),
    /// Per-iteration correlation curves.
    Converge(ConvergeArgs),
    /// Trace the homotopy path of one instance.
    Path(PathArgs),
    /// Moment, injection, spectrum and path checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Absolute signal strength.
    #[arg(long, conflicts_with = "alpha")]
    tau: Option<f64>,
    /// Signal strength as a multiple of n^{3/4}.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output path with a `.json` extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long, value_parser = parse_tag)]
    algo: AlgorithmTag,
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground truth used to report correlations.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Injected sequence length for noise-inject.
    #[arg(long)]
    m: Option<usize>,
    /// Penalty coefficient for full-homotopy (sidecar tau, else estimated).
    #[arg(long)]
    tau_hat: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// JSON grid spec; other grid flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 96, 128])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
    tau: Vec<f64>,
    /// Read --tau as absolute values instead of multiples of n^{3/4}.
    #[arg(long)]
    absolute: bool,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_tag,
          default_values = ["homotopy", "power", "flatten"])]
    algos: Vec<AlgorithmTag>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1.1, 1.5, 2.0])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_tag,
          default_values = ["homotopy", "power", "flatten"])]
    algos: Vec<AlgorithmTag>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PathArgs {
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Absolute signal strength (default n^{3/4} log n).
    #[arg(long)]
    tau: Option<f64>,
    /// Penalty coefficient (default: tau).
    #[arg(long)]
    tau_hat: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit radii, strictly decreasing and ending at 0.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Moments,
    Injection,
    Goe,
    Path,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Injected sequence length for the injection suite.
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = Format::Csv, value_parser = parse_format)]
    format: Format,
}

fn parse_tag(s: &str) -> Result<AlgorithmTag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
        Error::ResourceGuard(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(cap) = cli.max_n_override {
        tpca_core::tensor::set_max_dim(cap);
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Recover(a) => commands::recover(a),
        Command::Grid(a) => commands::grid(a),
        Command::Converge(a) => commands::converge(a),
        Command::Path(a) => commands::path(a),
        Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
