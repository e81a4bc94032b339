//! `motok`: synthesize motion, train a tokenizer, tokenize, reconstruct and
//! evaluate.
//!
//! Exit codes: 0 success, 2 I/O, 3 configuration, data or arguments,
//! 4 numeric abort, 5 corrupt artifact.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motok::trainer::MotionFamily;
use motok::Error;

#[derive(Parser)]
#[command(name = "motok", version, about = "Motion heatmap tokenizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic keypoint sequence as JSON lines.
    Synth(SynthArgs),
    /// Render keypoints into heatmap windows (an MHT1 tensor).
    Render(RenderArgs),
    /// Train a tokenizer; writes checkpoints, a loss log and a manifest.
    Train(TrainArgs),
    /// Encode keypoints or heatmaps into token grids (MTK1).
    Tokenize(TokenizeArgs),
    /// Decode token grids back into heatmaps (MHT1).
    Detokenize(PathArgs),
    /// Reconstruction metrics as CSV plus a JSON mirror.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    joints: usize,
    #[arg(long)]
    frames: usize,
    /// pendulum, walk-cycle or random-smooth
    #[arg(long)]
    family: MotionFamily,
    /// Defaults to MOTOK_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Emit 3D keypoints inside this depth.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Keypoint JSONL file or a directory of them.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Keypoint JSONL (file or directory) or an MHT1 heatmap tensor.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct PathArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Value of the `model` column.
    #[arg(long, default_value = "motok")]
    tag: String,
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::NonFinite(_) => 4,
        Error::Format(_) => 5,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Render(a) => commands::render(a),
        Command::Train(a) => commands::train(a),
        Command::Tokenize(a) => commands::tokenize(a),
        Command::Detokenize(a) => commands::detokenize(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
