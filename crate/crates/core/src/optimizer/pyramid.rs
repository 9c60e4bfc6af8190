use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::image::{DepthMap, ImageBuffer};

/// Smallest image side allowed at the coarsest level.
pub const MIN_LEVEL_SIZE: usize = 16;

/// Coarse-to-fine schedule: `levels` resolutions, each half the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidConfig {
    pub levels: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("the pyramid needs at least one level".into()));
        }
        Ok(())
    }

    /// Number of levels usable for a `width x height` image.
    pub fn effective_levels(&self, width: usize, height: usize) -> usize {
        let mut n = 1;
        let (mut w, mut h) = (width, height);
        while n < self.levels && w / 2 >= MIN_LEVEL_SIZE && h / 2 >= MIN_LEVEL_SIZE {
            w /= 2;
            h /= 2;
            n += 1;
        }
        n
    }
}

/// Intrinsics of an image halved by 2x2 averaging.
pub fn halve_intrinsics(k: &Intrinsics) -> Intrinsics {
    Intrinsics {
        fx: k.fx / 2.0,
        fy: k.fy / 2.0,
        cx: (k.cx + 0.5) / 2.0 - 0.5,
        cy: (k.cy + 0.5) / 2.0 - 0.5,
        width: k.width / 2,
        height: k.height / 2,
    }
}

/// Images and depth of a sequence at one resolution.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub intrinsics: Intrinsics,
    pub frames: Vec<ImageBuffer>,
    pub depths: Vec<Option<DepthMap>>,
    pub gt_depths: Vec<Option<DepthMap>>,
}

impl Level {
    fn halve(&self) -> Level {
        let half = |d: &Option<DepthMap>| d.as_ref().map(DepthMap::downsample2);
        Level {
            intrinsics: halve_intrinsics(&self.intrinsics),
            frames: self.frames.iter().map(ImageBuffer::downsample2).collect(),
            depths: self.depths.iter().map(half).collect(),
            gt_depths: self.gt_depths.iter().map(half).collect(),
        }
    }
}

/// Levels from finest (index 0) to coarsest.
pub(crate) fn build(base: Level, levels: usize) -> Vec<Level> {
    let mut out = vec![base];
    while out.len() < levels {
        let next = out.last().expect("non-empty").halve();
        out.push(next);
    }
    out
}

/// Bilinearly upsamples a coarse per-pixel field onto a grid of
/// `width x height` pixels whose 2x2 blocks averaged into the coarse pixels.
pub(crate) fn upsample2(field: &[f64], cw: usize, ch: usize, width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    let at = |x: usize, y: usize| field[y * cw + x];
    for y in 0..height {
        let sy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (ch - 1) as f64);
        let y0 = (sy.floor() as usize).min(ch.saturating_sub(2));
        let y1 = (y0 + 1).min(ch - 1);
        let ay = sy - y0 as f64;
        for x in 0..width {
            let sx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (cw - 1) as f64);
            let x0 = (sx.floor() as usize).min(cw.saturating_sub(2));
            let x1 = (x0 + 1).min(cw - 1);
            let ax = sx - x0 as f64;
            let top = (1.0 - ax) * at(x0, y0) + ax * at(x1, y0);
            let bottom = (1.0 - ax) * at(x0, y1) + ax * at(x1, y1);
            out[y * width + x] = (1.0 - ay) * top + ay * bottom;
        }
    }
    out
}
