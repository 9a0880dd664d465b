//! The `funcgrasp` command line: synthesize, filter, eval, train, sample
//! and export.
//!
//! Each command is a plain function writing its report to the given
//! output, so the binary and the tests share one code path.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;

/// Caps the number of worker threads when set.
pub const THREADS_ENV: &str = "FUNCGRASP_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] funcgrasp::Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Every synthesis run failed.
    AllRunsFailed,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::AllRunsFailed => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "funcgrasp", version, about = "Functional dexterous grasp synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize grasps for every object in a directory over its scale range.
    Synthesize(SynthesizeArgs),
    /// Keep the records that pass the quality thresholds.
    Filter(FilterArgs),
    /// Per-category metric means.
    Eval(EvalArgs),
    /// Train the grasp network on a record file.
    Train(TrainArgs),
    /// Sample grasps for an object from a trained network.
    Sample(SampleArgs),
    /// Write an object and a posed hand as PLY meshes.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Hand description (JSON).
    pub hand: PathBuf,
    /// Directory of `<name>.obj`/`<name>.ply` meshes with `<name>.json` annotations.
    pub object_dir: PathBuf,
    /// Output record file.
    pub out: PathBuf,
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Runs per object and scale.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of scales per object; the category range's count when omitted.
    #[arg(long)]
    pub scales: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Thresholds (TOML with `max_dg`, `max_df`, `max_dip`, `max_dsp`).
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training records.
    pub dataset: PathBuf,
    /// Hand description the records were made for.
    pub hand: PathBuf,
    /// Checkpoint to write.
    pub checkpoint: PathBuf,
    /// Training settings (TOML).
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Directory holding the objects the records refer to.
    #[arg(long)]
    pub objects: PathBuf,
    /// Loss-curve CSV; next to the checkpoint when omitted.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    /// Object mesh; its annotation is the `.json` file beside it.
    pub object: PathBuf,
    pub out: PathBuf,
    /// Hand description matching the checkpoint.
    #[arg(long)]
    pub hand: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Object scale (m); the annotation's native scale when omitted.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Pipeline configuration for the metrics (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub records: PathBuf,
    /// 0-based record index.
    pub index: usize,
    pub out_dir: PathBuf,
    #[arg(long)]
    pub hand: PathBuf,
    /// Directory holding the record's object.
    #[arg(long)]
    pub objects: PathBuf,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<Status> {
    match &cli.command {
        Command::Synthesize(a) => commands::synthesize(a, out),
        Command::Filter(a) => commands::filter(a, out).map(|_| Status::Success),
        Command::Eval(a) => commands::eval(a, out).map(|_| Status::Success),
        Command::Train(a) => commands::train(a, out).map(|_| Status::Success),
        Command::Sample(a) => commands::sample(a, out).map(|_| Status::Success),
        Command::Export(a) => commands::export(a, out).map(|_| Status::Success),
    }
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
