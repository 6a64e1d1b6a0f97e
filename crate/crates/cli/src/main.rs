mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  a checked property failed
  2  usage or configuration error
  3  I/O error
  4  domain error (invalid input values)";

/// Direction prediction, convolution accounting and pipeline benchmarks.
#[derive(Debug, Parser)]
#[command(name = "uvk", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track an object through a directory of PGM frames.
    #[command(after_help = EXIT_CODES)]
    Track(TrackArgs),
    /// Compare the direction predictor against exhaustive search on a synthetic sequence.
    #[command(after_help = EXIT_CODES)]
    Bench(BenchArgs),
    /// Run the convolution self-checks on random instances.
    #[command(after_help = EXIT_CODES)]
    ConvCheck(ConvCheckArgs),
    /// Per-layer operation and parameter counts for a network file.
    #[command(after_help = EXIT_CODES)]
    Opcount(OpcountArgs),
    /// Power, battery and RAM budget for a network file.
    #[command(after_help = EXIT_CODES)]
    Budget(BudgetArgs),
    /// Measure pipeline throughput for several worker counts.
    #[command(after_help = EXIT_CODES)]
    PipelineBench(PipelineBenchArgs),
    /// Write a synthetic sequence as PGM frames plus a ground-truth CSV.
    #[command(after_help = EXIT_CODES)]
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct TrackerFlags {
    /// Tracker configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Directory of PGM frames, read in lexicographic order.
    #[arg(long)]
    frames: PathBuf,
    /// Initial object center in the first frame.
    #[arg(long, value_name = "X,Y")]
    init: String,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Sequence spec file; the reference sequence is used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sequence seed. The UVK_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
    /// Timing repetitions (at least 3).
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Debug, Args)]
struct ConvCheckArgs {
    /// RNG seed. The UVK_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per property.
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

#[derive(Debug, Args)]
struct OpcountArgs {
    /// Network file: `mode lk m n lf` per line, optional `bytes_per_weight B`.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Network file, as for `opcount`.
    #[arg(long)]
    spec: PathBuf,
    /// Inferences per second.
    #[arg(long)]
    fo: f64,
    /// Energy per operation in joules.
    #[arg(long)]
    eo: f64,
    /// Battery power in watts.
    #[arg(long)]
    battery: f64,
    /// Available RAM in bytes.
    #[arg(long)]
    ram: u64,
    /// Operations per inference; defaults to the network's MAC count.
    #[arg(long)]
    ops: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineBenchArgs {
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<usize>,
    /// Jobs per run.
    #[arg(long, default_value_t = 200)]
    frames: usize,
    /// Single-thread cost of the CPU-bound stage in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    stage_ms: f64,
    /// Input queue capacity.
    #[arg(long, default_value_t = 8)]
    capacity: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Sequence spec file; the reference sequence is used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sequence seed. The UVK_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => commands::track(a),
        Command::Bench(a) => commands::bench(a),
        Command::ConvCheck(a) => commands::conv_check(a),
        Command::Opcount(a) => commands::opcount(a),
        Command::Budget(a) => commands::budget(a),
        Command::PipelineBench(a) => commands::pipeline_bench(a),
        Command::GenData(a) => commands::gen_data(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uvk: {e}");
            ExitCode::from(e.code())
        }
    }
}
