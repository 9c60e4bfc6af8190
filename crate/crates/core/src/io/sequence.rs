use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::formats::{
    read_depth_png, read_intrinsics, read_rgb_png, read_trajectory, write_depth_png, write_intrinsics,
    write_rgb_png, write_trajectory, Trajectory, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseParams};
use crate::image::{DepthMap, ImageBuffer};
use crate::optimizer::SequenceState;
use crate::synth::{relative_pose, SyntheticSequence};

/// On-disk sequence: `rgb/NNNNNN.png`, optional `depth/NNNNNN.png`,
/// `intrinsics.txt` and optional `poses_gt.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLayout {
    pub root: PathBuf,
}

fn frame_name(i: usize) -> String {
    format!("{i:06}.png")
}

fn indices_in(dir: &Path) -> Result<Vec<usize>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::load(dir, e.to_string()))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::load(dir, e.to_string()))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.len() == 6 {
                if let Ok(i) = stem.parse() {
                    out.push(i);
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

impl SequenceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn rgb_path(&self, i: usize) -> PathBuf {
        self.root.join("rgb").join(frame_name(i))
    }

    pub fn depth_path(&self, i: usize) -> PathBuf {
        self.root.join("depth").join(frame_name(i))
    }

    pub fn intrinsics_path(&self) -> PathBuf {
        self.root.join("intrinsics.txt")
    }

    pub fn poses_gt_path(&self) -> PathBuf {
        self.root.join("poses_gt.txt")
    }

    pub fn has_depth(&self) -> bool {
        self.root.join("depth").is_dir()
    }

    /// Number of frames, checking that indices run from 0 without gaps and
    /// that depth frames, when present, match the color frames.
    pub fn frame_count(&self) -> Result<usize> {
        let rgb_dir = self.root.join("rgb");
        let rgb = indices_in(&rgb_dir)?;
        if rgb.is_empty() {
            return Err(Error::load(&rgb_dir, "no frames"));
        }
        if let Some(pos) = rgb.iter().enumerate().position(|(i, v)| i != *v) {
            return Err(Error::load(self.rgb_path(pos), "missing frame (indices must be contiguous from 0)"));
        }
        if self.has_depth() {
            let depth = indices_in(&self.root.join("depth"))?;
            if depth != rgb {
                return Err(Error::load(
                    self.root.join("depth"),
                    format!("{} depth frames for {} color frames", depth.len(), rgb.len()),
                ));
            }
        }
        Ok(rgb.len())
    }

    /// Writes frames, depth (all frames or none), intrinsics and optional
    /// ground-truth poses.
    pub fn write(
        &self,
        frames: &[ImageBuffer],
        depths: &[Option<DepthMap>],
        k: &Intrinsics,
        poses_gt: Option<&Trajectory>,
    ) -> Result<()> {
        let with_depth = depths.iter().filter(|d| d.is_some()).count();
        if with_depth != 0 && (with_depth != frames.len() || depths.len() != frames.len()) {
            return Err(Error::Config("depth must be given for every frame or for none".into()));
        }
        let mkdir = |p: PathBuf| std::fs::create_dir_all(&p).map_err(|e| Error::load(&p, e.to_string()));
        mkdir(self.root.join("rgb"))?;
        if with_depth > 0 {
            mkdir(self.root.join("depth"))?;
        }
        for (i, f) in frames.iter().enumerate() {
            write_rgb_png(&self.rgb_path(i), f)?;
        }
        for (i, d) in depths.iter().enumerate() {
            if let Some(d) = d {
                write_depth_png(&self.depth_path(i), d)?;
            }
        }
        write_intrinsics(&self.intrinsics_path(), k)?;
        if let Some(t) = poses_gt {
            write_trajectory(&self.poses_gt_path(), t)?;
        }
        Ok(())
    }

    /// Writes a rendered sequence with its measured depth and ground-truth
    /// poses relative to frame 0.
    pub fn write_synthetic(&self, seq: &SyntheticSequence) -> Result<()> {
        let first = &seq.cameras[0];
        let records = seq
            .cameras
            .iter()
            .enumerate()
            .skip(1)
            .map(|(index, cam)| TrajectoryRecord {
                index,
                pose: PoseParams::from_pose(&relative_pose(first, cam)),
            })
            .collect();
        let gt = Trajectory { reference: 0, records };
        self.write(&seq.state.frames, &seq.state.depths, &seq.state.intrinsics, Some(&gt))
    }
}

/// Loads frames `start .. start + count` resized to `width x height`.
/// The middle frame becomes the reference; ground-truth poses are filled in
/// from `poses_gt.txt` when it exists.
pub fn load_sequence(root: &Path, start: usize, count: usize, width: usize, height: usize) -> Result<SequenceState> {
    let layout = SequenceLayout::new(root);
    let total = layout.frame_count()?;
    if count < 2 {
        return Err(Error::Config(format!("a window needs at least 2 frames, got {count}")));
    }
    if start + count > total {
        return Err(Error::load(
            root,
            format!("frames {start}..{} requested but the sequence has {total}", start + count),
        ));
    }
    let native = read_intrinsics(&layout.intrinsics_path())?;
    let k = native.resized_to(width, height);
    let with_depth = layout.has_depth();
    let loaded: Vec<(ImageBuffer, Option<DepthMap>)> = (start..start + count)
        .into_par_iter()
        .map(|i| {
            let path = layout.rgb_path(i);
            let rgb = read_rgb_png(&path)?;
            if rgb.width() != native.width || rgb.height() != native.height {
                return Err(Error::load(
                    &path,
                    format!(
                        "image is {}x{}, intrinsics are for {}x{}",
                        rgb.width(),
                        rgb.height(),
                        native.width,
                        native.height
                    ),
                ));
            }
            let depth = if with_depth {
                let path = layout.depth_path(i);
                let d = read_depth_png(&path)?;
                if d.width != native.width || d.height != native.height {
                    return Err(Error::load(&path, "depth and color sizes differ"));
                }
                if d.valid_count() == 0 {
                    return Err(Error::load(&path, "depth map has no valid pixel"));
                }
                Some(d.resize_nearest_valid(width, height))
            } else {
                None
            };
            Ok((rgb.resize_area(width, height), depth))
        })
        .collect::<Result<_>>()?;
    let (frames, depths): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let mut state = SequenceState::new(frames, depths, k)?;
    let gt_path = layout.poses_gt_path();
    if gt_path.exists() {
        let traj = read_trajectory(&gt_path)?;
        let r = start + state.reference_index();
        let gt = state
            .target_indices()
            .into_iter()
            .map(|t| {
                traj.relative(r, start + t)
                    .map(|p| PoseParams::from_pose(&p))
                    .ok_or_else(|| Error::load(&gt_path, format!("no pose for frame {} or {r}", start + t)))
            })
            .collect::<Result<Vec<_>>>()?;
        state.gt_poses = Some(gt);
    }
    Ok(state)
}
