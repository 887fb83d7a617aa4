//! `stgabor` command-line tool: feature extraction, cross-validated
//! classification, tuning curves and kernel/response dumps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Crop, FrameWindow, SpeedSpec};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<stgabor::Error> for CliError {
    fn from(e: stgabor::Error) -> Self {
        use stgabor::Error::*;
        match e {
            Numeric(_) => CliError::Numeric(e.to_string()),
            InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "stgabor", version, about = "Spatiotemporal Gabor filter banks for dynamic textures", after_help = config::CONFIG_HELP)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute bank energies for every video in a manifest.
    Extract(ExtractArgs),
    /// 1-NN k-fold cross-validation over a feature CSV.
    Classify(ClassifyArgs),
    /// Tuning curve of a filter family on a synthetic stimulus.
    Tune(TuneArgs),
    /// Sample one kernel and dump it.
    Kernel(KernelArgs),
    /// Filter one video with one kernel.
    Convolve(ConvolveArgs),
}

#[derive(Args, Debug, Default)]
pub struct BankArgs {
    /// `min:max:step` or a comma-separated list.
    #[arg(long)]
    pub speeds: Option<SpeedSpec>,
    /// 4 or 8.
    #[arg(long)]
    pub directions: Option<usize>,
    /// moving | stationary
    #[arg(long)]
    pub envelope: Option<String>,
    /// none | per-voxel
    #[arg(long)]
    pub normalize: Option<String>,
    /// auto | direct | spectral
    #[arg(long)]
    pub backend: Option<String>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// `path,label` CSV; paths are `.stv` volumes or frame directories.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Spatial crop `X,Y,W,H` applied to every video.
    #[arg(long)]
    pub crop: Option<Crop>,
    /// Temporal window `START:COUNT`.
    #[arg(long)]
    pub frames: Option<FrameWindow>,
    /// Overwrite an output whose fingerprint differs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// euclidean | manhattan
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub zscore: bool,
    /// Confusion matrix CSV.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Direction,
    Speed,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Stimulus motion direction, radians.
    #[arg(long, default_value_t = 0.0)]
    pub stimulus_direction: f64,
    /// Stimulus speed, pixels/frame.
    #[arg(long, default_value_t = 1.0)]
    pub stimulus_speed: f64,
    /// Filter speed for a direction sweep.
    #[arg(long, default_value_t = 1.0)]
    pub filter_speed: f64,
    /// Filter direction for a speed sweep.
    #[arg(long, default_value_t = 0.0)]
    pub filter_direction: f64,
    /// Swept values; defaults to the bank's directions or speeds.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Stimulus extent `WxHxT`.
    #[arg(long, default_value = "64x64x16")]
    pub extent: String,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub bank: BankArgs,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long = "v", default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    #[arg(long, default_value = "moving")]
    pub envelope: String,
    /// Override σ (default 0.56 λ).
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Native volume output; a `.meta` sidecar is written next to it.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-frame text slices (default: stdout).
    #[arg(long)]
    pub slices: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvolveArgs {
    /// `.stv` volume or frame directory.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Write the quadrature magnitude instead of the single-phase response.
    #[arg(long)]
    pub quadrature: bool,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(&config::read_config_file(path)?)?;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Extract(a) => commands::extract(cfg, a),
        Command::Classify(a) => commands::classify(cfg, a),
        Command::Tune(a) => commands::tune(cfg, a),
        Command::Kernel(a) => commands::kernel(a),
        Command::Convolve(a) => commands::convolve(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stgabor: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
