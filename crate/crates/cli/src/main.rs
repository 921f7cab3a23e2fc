//! `ifspi`: run imaging, sensing and calibration simulations from the
//! command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 configuration error, 4 runtime
//! failure. Failures print one JSON line on stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ifspi::interferometer::Channel;
use ifspi::spi::MaskOrdering;

/// Environment variable naming the directory that relative `--out` paths
/// resolve against.
pub const OUT_ROOT_ENV: &str = "IFSPI_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "ifspi",
    version,
    about = "Interaction-free single-pixel quantum imaging with undetected photons",
    long_about = "Simulates a nonlinear interferometer whose idler arm holds an interaction-free \
                  measurement module. Runs array-detector and single-pixel imaging, object sensing, \
                  interference-curve scans, resolution fits and phase imaging, and writes PGM, CSV \
                  and JSON artifacts.\n\nConfiguration comes from built-in defaults, then the TOML \
                  file given by --config, then command-line flags.\n\nExit codes: 0 ok, 2 usage, \
                  3 config, 4 runtime."
)]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed of all random streams
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: out/<command>], relative to $IFSPI_OUT_ROOT when set
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Expected counts instead of Poisson draws
    #[arg(long, global = true)]
    pub noiseless: bool,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Object-presence sensing: count histograms, two-Gaussian fit, threshold and confidence
    Sense(SenseArgs),
    /// Image an object plate with the array detector or by single-pixel imaging
    Image(ImageArgs),
    /// Interference curves and visibilities for an empty and a blocked IFM
    Curves(CurvesArgs),
    /// Knife-edge resolution fit
    Resolution(ResolutionArgs),
    /// Export Hadamard masks as PGM files
    Masks(MasksArgs),
    /// Phase imaging of the three-letter logo without the IFM module
    PhaseSim(PhaseArgs),
    /// Fit visibility and mode-overlap factors to measured signal visibilities
    Calibrate(CalibrateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sense(_) => "sense",
            Command::Image(_) => "image",
            Command::Curves(_) => "curves",
            Command::Resolution(_) => "resolution",
            Command::Masks(_) => "masks",
            Command::PhaseSim(_) => "phase-sim",
            Command::Calibrate(_) => "calibrate",
        }
    }
}

#[derive(Debug, Args)]
pub struct SenseArgs {
    /// Trials per class
    #[arg(long)]
    pub trials: Option<usize>,
    /// Object-present rate, counts/s
    #[arg(long)]
    pub present_rate: Option<f64>,
    /// Object-absent rate, counts/s
    #[arg(long)]
    pub absent_rate: Option<f64>,
    /// Derive both rates from the interferometer model and emission rate
    #[arg(long, conflicts_with_all = ["present_rate", "absent_rate"])]
    pub from_model: bool,
    /// Relative rate jitter added to Poisson noise
    #[arg(long)]
    pub excess_noise: Option<f64>,
    /// Required distance of the threshold from each class mean, in class σ
    #[arg(long)]
    pub k_sigma: Option<f64>,
    /// Histogram bin width, counts
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Exposure per trial, s
    #[arg(long)]
    pub integration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageMode {
    Iccd,
    Spi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Natural,
    Sequency,
}

impl From<OrderingArg> for MaskOrdering {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::Natural => MaskOrdering::Natural,
            OrderingArg::Sequency => MaskOrdering::Sequency,
        }
    }
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Acquisition pipeline [default: config mode, else iccd]
    #[arg(long, value_enum)]
    pub mode: Option<ImageMode>,
    /// Masks measured (spi)
    #[arg(long)]
    pub masks: Option<usize>,
    /// Masks are 2^scale pixels on a side (spi)
    #[arg(long)]
    pub scale: Option<u32>,
    /// Mask order (spi)
    #[arg(long, value_enum)]
    pub ordering: Option<OrderingArg>,
    /// Object canvas size in pixels; must match the raster given by --object
    #[arg(long)]
    pub size: Option<usize>,
    /// PGM amplitude raster of the object
    #[arg(long, value_name = "PGM", conflicts_with = "glyph")]
    pub object: Option<PathBuf>,
    /// PGM phase raster, mapped onto [0, 2π)
    #[arg(long, value_name = "PGM", requires = "object")]
    pub phase: Option<PathBuf>,
    /// Shipped glyph plate: N, J or U
    #[arg(long)]
    pub glyph: Option<String>,
    /// Raster level at and above which a pixel is transparent [default: linear mapping]
    #[arg(long)]
    pub threshold: Option<u16>,
    /// Swap transparent and opaque regions
    #[arg(long)]
    pub invert: bool,
    /// Blur rate maps with the geometry's edge-spread width
    #[arg(long)]
    pub blur: bool,
    /// Pair-emission rate per pixel, counts/s
    #[arg(long)]
    pub rate: Option<f64>,
    /// Exposure per phase setting, s
    #[arg(long)]
    pub integration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Phase samples over one period
    #[arg(long)]
    pub samples: Option<usize>,
    /// Channels to scan
    #[arg(long, value_delimiter = ',', value_parser = parse_channel)]
    pub channels: Option<Vec<Channel>>,
    /// Use the model fitted to the reference visibilities
    #[arg(long)]
    pub calibrated: bool,
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    s.parse::<Channel>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ResolutionArgs {
    /// Frame width in pixels
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame rows, all fitted together
    #[arg(long)]
    pub rows: Option<usize>,
    /// First transparent column
    #[arg(long)]
    pub edge_col: Option<usize>,
    /// Incoherent counts per pixel
    #[arg(long)]
    pub counts: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MasksArgs {
    /// Masks are 2^scale pixels on a side
    #[arg(long)]
    pub scale: Option<u32>,
    /// Number of masks written [default: config spi.masks, capped at the set size]
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, value_enum)]
    pub ordering: Option<OrderingArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhasePreset {
    /// Unit amplitude with phases 0, π/8, π/4
    Unit,
    /// Amplitude 1/√2 with the same phases
    Attenuated,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    /// Region transmissions [default: config phase_sim section]
    #[arg(long, value_enum)]
    pub preset: Option<PhasePreset>,
    /// Mean counts per pixel with induced coherence inhibited
    #[arg(long)]
    pub mean_counts: Option<f64>,
    /// Square canvas size in pixels
    #[arg(long, conflicts_with_all = ["width", "height"])]
    pub size: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Signal visibility without object at φ = π
    #[arg(long)]
    pub constructive: Option<f64>,
    /// Signal visibility without object at φ = 0
    #[arg(long)]
    pub residual: Option<f64>,
    /// Signal visibility with an opaque object at φ = 0
    #[arg(long)]
    pub object_present: Option<f64>,
}

/// A failed invocation, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn report(&self) -> String {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Config(m) => ("config", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        json!({ "error": kind, "code": self.code(), "message": message }).to_string()
    }
}

impl From<ifspi::Error> for Failure {
    fn from(e: ifspi::Error) -> Self {
        use ifspi::Error as E;
        match e {
            E::InvalidConfig(_) | E::Parse(_) | E::DimensionMismatch(_) | E::Io { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            _ => {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
                let failure = Failure::Usage(first.to_string());
                eprintln!("{}", failure.report());
                return ExitCode::from(failure.code());
            }
        },
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::dispatch(&cli) {
        Ok(out) => {
            log::info!("artifacts written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{}", failure.report());
            ExitCode::from(failure.code())
        }
    }
}
