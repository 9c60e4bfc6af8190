//! Direct minimization of the total loss over relative poses and the
//! reference inverse depth.

mod adam;
mod pyramid;
mod solve;

pub use adam::{adam_step, AdamConfig, AdamMoments};
pub use pyramid::{halve_intrinsics, PyramidConfig, MIN_LEVEL_SIZE};
pub use solve::{
    alternate_optimize, check_informative, optimize_depth, optimize_pose, DepthSolution, IterationRecord,
    JointSolution, PoseSolution, Stage,
};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseParams};
use crate::image::{DepthMap, ImageBuffer};

/// Frames of a short sequence. The middle frame (`N / 2`) is the reference;
/// `poses[j]` maps reference camera points into the frame
/// `target_indices()[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceState {
    pub frames: Vec<ImageBuffer>,
    /// Measured or estimated depth per frame.
    pub depths: Vec<Option<DepthMap>>,
    /// Ground-truth depth per frame, used by the weak supervision term.
    pub gt_depths: Vec<Option<DepthMap>>,
    pub poses: Vec<PoseParams>,
    /// Ground-truth relative poses, when known.
    pub gt_poses: Option<Vec<PoseParams>>,
    pub intrinsics: Intrinsics,
}

impl SequenceState {
    /// A sequence with identity initial poses and no ground truth.
    pub fn new(frames: Vec<ImageBuffer>, depths: Vec<Option<DepthMap>>, intrinsics: Intrinsics) -> Result<Self> {
        let n = frames.len();
        let state = Self {
            poses: vec![PoseParams::zero(); n.saturating_sub(1)],
            gt_depths: vec![None; n],
            gt_poses: None,
            frames,
            depths,
            intrinsics,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn reference_index(&self) -> usize {
        self.frames.len() / 2
    }

    /// Frame indices of the targets, in pose order.
    pub fn target_indices(&self) -> Vec<usize> {
        let r = self.reference_index();
        (0..self.frames.len()).filter(|i| *i != r).collect()
    }

    pub fn reference_frame(&self) -> &ImageBuffer {
        &self.frames[self.reference_index()]
    }

    pub fn reference_depth(&self) -> Option<&DepthMap> {
        self.depths[self.reference_index()].as_ref()
    }

    pub fn reference_gt_depth(&self) -> Option<&DepthMap> {
        self.gt_depths[self.reference_index()].as_ref()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if n < 2 {
            return Err(Error::Config(format!("a sequence needs at least 2 frames, got {n}")));
        }
        if self.depths.len() != n || self.gt_depths.len() != n {
            return Err(Error::Config("one depth slot per frame is required".into()));
        }
        if self.poses.len() != n - 1 {
            return Err(Error::Config(format!("{} poses for {} target frames", self.poses.len(), n - 1)));
        }
        if let Some(gt) = &self.gt_poses {
            if gt.len() != n - 1 {
                return Err(Error::Config("ground-truth pose count does not match".into()));
            }
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let channels = self.frames[0].channels();
        for f in &self.frames {
            f.check_dims(w, h)?;
            if f.channels() != channels {
                return Err(Error::Config("frames differ in channel count".into()));
            }
        }
        for d in self.depths.iter().chain(&self.gt_depths).flatten() {
            d.check_dims(w, h)?;
        }
        Ok(())
    }
}
