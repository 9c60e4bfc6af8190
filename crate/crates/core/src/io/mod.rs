//! Files on disk: configuration, sequences, trajectories and metrics.

mod config;
mod eval;
mod formats;
mod run;
mod sequence;

pub use config::KeyValues;
pub use eval::{eval_depth, eval_pose, PoseErrors};
pub use formats::{
    read_camera_path, read_depth_png, read_intrinsics, read_rgb_png, read_trajectory, write_depth_png,
    write_intrinsics, write_loss_csv, write_rgb_png, write_trajectory, Trajectory, TrajectoryRecord,
};
pub use run::RunConfig;
pub use sequence::{load_sequence, SequenceLayout};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes a file by filling a temporary sibling and renaming it into place.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::load(path, e.to_string()))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().map_err(|e| Error::load(path, e.to_string()))?;
    tmp.persist(path).map_err(|e| Error::load(path, e.error.to_string()))?;
    Ok(())
}

/// [`write_atomic`] for text content.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |f| {
        f.write_all(text.as_bytes()).map_err(|e| Error::load(path, e.to_string()))
    })
}
