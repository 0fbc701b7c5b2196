mod commands;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::output::Format;

#[derive(Parser)]
#[command(name = "stisnn", version, about = "Spiking CNN accelerator model: inference, cost and pipeline reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Network configuration file (JSON or compact architecture string).
    #[arg(long, conflicts_with = "arch", required_unless_present = "arch")]
    config: Option<PathBuf>,
    /// Inline compact architecture, e.g. "28x28 16c3-32c3-p2-32c3-p2-fc".
    #[arg(long)]
    arch: Option<String>,
    /// Timesteps; overrides the configuration.
    #[arg(long = "T", value_name = "T")]
    timesteps: Option<usize>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify IDX images with a weight file; reports accuracy and per-layer SFR.
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Only the first N images.
        #[arg(long)]
        limit: Option<usize>,
        /// Per-image predictions as CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Access counts, latency, membrane storage and energy per layer.
    Cost {
        #[command(flatten)]
        config: ConfigArgs,
        /// Frames streamed through the pipeline for the makespan figure.
        #[arg(long, default_value_t = 1)]
        frames: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Discrete-event simulation of the layer pipeline.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        frames: u64,
        #[arg(long, value_enum, default_value = "fine")]
        granularity: commands::GranularityArg,
        /// FIFO depth for every stage; unbounded when omitted.
        #[arg(long, conflicts_with = "size_fifos")]
        capacity: Option<u64>,
        /// Size each FIFO to the smallest depth within 1% of the unbounded makespan.
        #[arg(long)]
        size_fifos: bool,
        /// Per-frame, per-stage timing as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Encode one image and write the encoder's spikes as an STIE event stream.
    Encode {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 0)]
        timestep: usize,
        /// STIE output file.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Output-stationary against weight-stationary traffic per convolution layer.
    CompareDataflow {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Per-layer parallel factors minimizing the bottleneck under a PE budget.
    SearchParallel {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        budget: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a seeded random weight file for a configuration.
    InitWeights {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure surfaced to the user as a JSON record on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<stisnn::Error> for CliError {
    fn from(e: stisnn::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
