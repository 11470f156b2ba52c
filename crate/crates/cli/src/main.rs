//! `evc`: batch driver for prosody extraction, smoothing, augmentation,
//! discrete-unit processing, evaluation and self-checks.
//!
//! Exit codes: 0 success, 1 check failure, 2 I/O or argument error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{CountRange, Range};

#[derive(Debug, Parser)]
#[command(
    name = "evc",
    version,
    about = "Prosody transfer toolkit for emotional voice conversion"
)]
pub struct Cli {
    /// Master seed for every random draw; drawn from entropy when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for multi-file commands.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract F0, energy and VUV (plus optional unit durations) from WAV files.
    Extract(ExtractArgs),
    /// Re-smooth the contours of existing bundles.
    Smooth(SmoothArgs),
    /// Add augmented F0/energy contours to bundles.
    Augment(AugmentArgs),
    /// Discrete unit tools.
    #[command(subcommand)]
    Units(UnitsCommand),
    /// Compute objective metrics between reference and converted bundles.
    Eval(EvalArgs),
    /// Run the gradient and oracle self-checks.
    Check(CheckArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SmoothingFlags {
    /// Savitzky-Golay window in frames (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Savitzky-Golay polynomial order.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output bundle (one input) or directory (several inputs).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Unit files (`{"units": [...]}`), one per input, for duration features.
    #[arg(long)]
    pub units: Vec<PathBuf>,
    /// Also write `<stem>.f0.csv` and `<stem>.energy.csv` here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub f0_min: Option<f64>,
    #[arg(long)]
    pub f0_max: Option<f64>,
    /// Periodicity threshold for the voicing decision.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub smoothing: SmoothingFlags,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub smoothing: SmoothingFlags,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Shift range in frames, `lo,hi` or a symmetric bound.
    #[arg(long, allow_hyphen_values = true)]
    pub shift_range: Option<Range<i64>>,
    /// Warp segment-count range `lo,hi`.
    #[arg(long)]
    pub segments: Option<CountRange>,
    /// Warp scale range `lo,hi`.
    #[arg(long)]
    pub scale_range: Option<Range<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum UnitsCommand {
    /// Fit a K-means codebook on frame features.
    Fit {
        /// CSV features, or `.bin` with a `.bin.json` sidecar.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Map frame features to their nearest codebook entries.
    Encode {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run-length deduplicate a unit file.
    Dedup {
        #[arg(long)]
        units: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Expand a deduplicated file back into a unit file.
    Expand {
        #[arg(long)]
        dedup: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref", required_unless_present = "pairs")]
    pub reference: Option<PathBuf>,
    #[arg(long, required_unless_present = "pairs")]
    pub hyp: Option<PathBuf>,
    #[arg(long)]
    pub ref_text: Option<PathBuf>,
    #[arg(long)]
    pub hyp_text: Option<PathBuf>,
    #[arg(long)]
    pub ref_emb: Option<PathBuf>,
    #[arg(long)]
    pub hyp_emb: Option<PathBuf>,
    /// Batch mode: tab-separated lines of
    /// `ref hyp [ref_text hyp_text [ref_emb hyp_emb]]`.
    #[arg(long, conflicts_with_all = ["reference", "hyp"])]
    pub pairs: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Finite-difference gradient checks and the GRL contract.
    #[arg(long)]
    pub grads: bool,
    /// DTW and Savitzky-Golay brute-force oracles.
    #[arg(long)]
    pub oracles: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
