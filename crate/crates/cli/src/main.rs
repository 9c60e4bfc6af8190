//! Command-line front end: render synthetic sequences, warp frames, estimate
//! poses, refine depth and evaluate results.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rigidwarp", version, about = "Depth and camera motion from image sequences by rigid warping")]
struct Cli {
    /// Log progress to standard error (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a sequence of a synthetic room.
    Synth {
        /// Scene description (key = value).
        #[arg(long)]
        scene: PathBuf,
        /// Camera-to-world poses, one `tx ty tz rx ry rz` line per frame.
        #[arg(long)]
        trajectory: PathBuf,
        /// Output sequence directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize the reference view from a target frame.
    Warp {
        #[arg(long)]
        seq: PathBuf,
        /// Reference frame index (its depth is used).
        #[arg(long = "ref")]
        reference: usize,
        /// Target frame index.
        #[arg(long)]
        target: usize,
        /// Reference-to-target pose "tx ty tz rx ry rz".
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        /// Output PNG; the validity mask goes next to it as `<stem>_mask.png`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the poses of a frame window relative to its middle frame.
    SolvePose {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output trajectory.
        #[arg(long)]
        out: PathBuf,
        /// Loss history CSV [default: the trajectory path with a .csv extension].
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Refine the depth of the middle frame of a window with fixed poses.
    RefineDepth {
        #[arg(long)]
        seq: PathBuf,
        /// Poses from `solve-pose`.
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the depth PNG and loss history.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare trajectories or depth maps with ground truth.
    Eval {
        /// Trajectory file, depth PNG or directory of depth PNGs.
        #[arg(long)]
        pred: PathBuf,
        /// Trajectory file, sequence directory, depth PNG or directory.
        #[arg(long)]
        gt: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_optimization_failure() { 2 } else { 1 })
        }
    }
}
