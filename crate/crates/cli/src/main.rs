//! `ssyn`: feature extraction, model fitting, generation, array simulation
//! and benchmarking for stochastic resistive-memory cells.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status 1: the input was read but failed validation or fitting.
/// Exit status 2: bad usage or an I/O problem.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Usage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

pub type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "ssyn", version, about = "Stochastic resistive-memory synapse model")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
pub struct ExecArgs {
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

impl ExecArgs {
    pub fn execution(&self) -> ssyn::Execution {
        match self.threads {
            Some(t) => ssyn::Execution::threads(t as usize),
            None => ssyn::Execution::all_cores(),
        }
    }
}

#[derive(Args)]
pub struct ParamsArg {
    /// Parameter file.
    #[arg(long, env = "SSYN_PARAMS")]
    pub params: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one feature vector per cycle from a raw I/U trace.
    Extract(ExtractArgs),
    /// Fit the normalizing map and SVAR models to a feature series.
    Fit(FitArgs),
    /// Generate feature vectors from a parameter file.
    Generate(GenerateArgs),
    /// Simulate an array under a pulse script.
    Sim(SimArgs),
    /// Measure write and read throughput.
    Bench(BenchArgs),
    /// Write a ground-truth corpus: parameters, features and waveform.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Trace file (`.csv` with columns `u,i`, or `.iuw`).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Features CSV.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Exclusion report (default: `<output>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Skip the adaptive moving-average filter.
    #[arg(long)]
    pub no_smoothing: bool,
    #[arg(long, default_value_t = ssyn::waveform::DEFAULT_SAMPLES_PER_CYCLE)]
    pub samples_per_cycle: usize,
    /// SET current threshold (A).
    #[arg(long, allow_hyphen_values = true)]
    pub set_threshold: Option<f64>,
    /// Minimum prominence of the RESET peak (A).
    #[arg(long)]
    pub reset_prominence: Option<f64>,
    /// Largest tolerated fraction of excluded cycles.
    #[arg(long)]
    pub max_excluded: Option<f64>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Clone, Copy, Debug)]
pub enum DegreeArg {
    Fixed(usize),
    Auto,
}

fn parse_degree(s: &str) -> Result<DegreeArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(DegreeArg::Auto);
    }
    match s.parse::<usize>() {
        Ok(d) if (1..=5).contains(&d) => Ok(DegreeArg::Fixed(d)),
        _ => Err("expected 1..=5 or `auto`".into()),
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// Features CSV.
    #[arg(long, short)]
    pub features: PathBuf,
    /// Model orders to fit (comma separated).
    #[arg(long = "order", short = 'p', value_delimiter = ',', default_value = "10",
          value_parser = clap::value_parser!(u32).range(1..=200))]
    pub orders: Vec<u32>,
    /// Parameter file to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Diagnostics JSON (default: `<output>.diagnostics.json`).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Degree of the map polynomials; `auto` lowers it per feature until the
    /// fit is monotone.
    #[arg(long, default_value = "5", value_parser = parse_degree)]
    pub degree: DegreeArg,
    /// Conduction model JSON (default: the sidecar written by `extract`).
    #[arg(long)]
    pub conduction: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    /// Number of feature vectors.
    #[arg(long = "count", short = 'n')]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Model order (default: highest in the file).
    #[arg(long = "order", short = 'p')]
    pub order: Option<usize>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    FullCycling,
    Multilevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HistoryArg {
    Stationary,
    BurnIn,
    Mean,
}

#[derive(Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    /// Number of cells.
    #[arg(long = "cells", short = 'm', value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long)]
    pub seed: u64,
    /// DtD scale factor (default: from the parameter file).
    #[arg(long)]
    pub a: Option<f64>,
    /// Model order (default: 10 if present, else the highest).
    #[arg(long = "order", short = 'p')]
    pub order: Option<usize>,
    #[arg(long, value_enum, conflicts_with = "pulses")]
    pub preset: Option<Preset>,
    /// Pulse script CSV `step,target,u_a`.
    #[arg(long, requires = "reads")]
    pub pulses: Option<PathBuf>,
    /// Read script CSV `step,target`.
    #[arg(long)]
    pub reads: Option<PathBuf>,
    /// Preset cycles.
    #[arg(long, default_value_t = 300)]
    pub cycles: usize,
    /// Pulses per half wave of a preset cycle.
    #[arg(long, default_value_t = 20)]
    pub pulses_per_half: usize,
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    pub u_neg: f64,
    /// Positive peak of `full-cycling`.
    #[arg(long, default_value_t = 1.5)]
    pub u_pos: f64,
    /// First positive peak of `multilevel`.
    #[arg(long, default_value_t = 0.7)]
    pub from: f64,
    /// Last positive peak of `multilevel`.
    #[arg(long, default_value_t = 1.5)]
    pub to: f64,
    #[arg(long, value_enum, default_value = "stationary")]
    pub history: HistoryArg,
    #[command(flatten)]
    pub readout: ReadoutArgs,
    /// Readout CSV.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Final cell states CSV.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Write the expanded pulse script here.
    #[arg(long)]
    pub script_out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Args)]
pub struct ReadoutArgs {
    /// Read voltage (V).
    #[arg(long)]
    pub u_read: Option<f64>,
    /// ADC resolution.
    #[arg(long)]
    pub bits: Option<u32>,
    /// ADC range, lower end (A).
    #[arg(long, allow_hyphen_values = true)]
    pub i_min: Option<f64>,
    /// ADC range, upper end (A).
    #[arg(long)]
    pub i_max: Option<f64>,
    /// Measurement bandwidth (Hz).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Temperature (K).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Noise-free reads.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchModeArg {
    Write,
    Read,
    Both,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    /// Cell counts (comma separated).
    #[arg(long = "cells", short = 'm', value_delimiter = ',', default_value = "1048576",
          value_parser = clap::value_parser!(u64).range(1..))]
    pub m: Vec<u64>,
    /// Model orders (comma separated).
    #[arg(long = "order", short = 'p', value_delimiter = ',', default_value = "10")]
    pub orders: Vec<usize>,
    /// Thread counts (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1",
          value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Vec<u32>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: BenchModeArg,
    #[arg(long)]
    pub seed: u64,
    /// Timed pulses per write measurement.
    #[arg(long, default_value_t = 10)]
    pub pulses: usize,
    /// Timed whole-array reads per read measurement.
    #[arg(long, default_value_t = 10)]
    pub reads: usize,
    /// Results CSV; run metadata goes to `<output>.meta.json`.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Iuw,
    Csv,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub output_dir: PathBuf,
    /// Number of cycles.
    #[arg(long = "cycles", short = 'n', value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "iuw")]
    pub trace_format: TraceFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Extract(a) => cmd::extract(a),
        Command::Fit(a) => cmd::fit(a),
        Command::Generate(a) => cmd::generate(a),
        Command::Sim(a) => cmd::sim(a),
        Command::Bench(a) => cmd::bench(a),
        Command::Synth(a) => cmd::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(e) | Failure::Usage(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
