//! Bilinear inverse warping and its derivatives with respect to the sampling
//! coordinates.
//!
//! A location is sampleable when it lies inside `[0, W-1] x [0, H-1]`; all four
//! interpolation neighbors then exist. Locations outside are reported through
//! the returned mask instead of being clamped to the border.

use crate::error::Result;
use crate::geometry::{rigid_flow, Intrinsics, PixelCoord, PoseSE3};
use crate::image::{CoordGrid, DepthMap, ImageBuffer};

/// The interpolation cell of a sampling location: top-left neighbor and the
/// fractional offsets inside the cell.
///
/// On a lattice line the cell to the right (below) is used, except on the
/// last column (row), which belongs to the preceding cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cell {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub ax: f64,
    pub ay: f64,
}

impl Cell {
    /// Cell of an in-bounds location, `None` outside the image.
    #[inline]
    pub fn locate(p: PixelCoord, width: usize, height: usize) -> Option<Cell> {
        let inside = p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (width - 1) as f64
            && p.y <= (height - 1) as f64;
        inside.then(|| Self::clamped(p, width, height))
    }

    /// Cell for any finite location: the cell index is clamped into the grid
    /// and the offsets extrapolate linearly beyond it.
    #[inline]
    pub fn clamped(p: PixelCoord, width: usize, height: usize) -> Cell {
        let last_x = width.max(2) as isize - 2;
        let last_y = height.max(2) as isize - 2;
        let x0 = (p.x.floor() as isize).clamp(0, last_x) as usize;
        let y0 = (p.y.floor() as isize).clamp(0, last_y) as usize;
        Cell {
            x0,
            y0,
            x1: (x0 + 1).min(width - 1),
            y1: (y0 + 1).min(height - 1),
            ax: p.x - x0 as f64,
            ay: p.y - y0 as f64,
        }
    }

    /// Interpolates a scalar grid stored with the given stride and offset.
    #[inline]
    pub fn sample(&self, data: &[f64], width: usize, stride: usize, offset: usize) -> f64 {
        let at = |x: usize, y: usize| data[(y * width + x) * stride + offset];
        let top = at(self.x0, self.y0) + self.ax * (at(self.x1, self.y0) - at(self.x0, self.y0));
        let bottom = at(self.x0, self.y1) + self.ax * (at(self.x1, self.y1) - at(self.x0, self.y1));
        top + self.ay * (bottom - top)
    }

    /// Derivatives of [`Cell::sample`] with respect to the location.
    #[inline]
    pub fn gradient(&self, data: &[f64], width: usize, stride: usize, offset: usize) -> (f64, f64) {
        let at = |x: usize, y: usize| data[(y * width + x) * stride + offset];
        let (i00, i10) = (at(self.x0, self.y0), at(self.x1, self.y0));
        let (i01, i11) = (at(self.x0, self.y1), at(self.x1, self.y1));
        let dx = (1.0 - self.ay) * (i10 - i00) + self.ay * (i11 - i01);
        let dy = (1.0 - self.ax) * (i01 - i00) + self.ax * (i11 - i10);
        (dx, dy)
    }

    /// Neighbor pixels and their interpolation weights.
    pub fn weights(&self) -> [((usize, usize), f64); 4] {
        [
            ((self.x0, self.y0), (1.0 - self.ax) * (1.0 - self.ay)),
            ((self.x1, self.y0), self.ax * (1.0 - self.ay)),
            ((self.x0, self.y1), (1.0 - self.ax) * self.ay),
            ((self.x1, self.y1), self.ax * self.ay),
        ]
    }
}

/// The four neighbors of an in-bounds sampling location with their weights.
pub fn bilinear_weights(
    p: PixelCoord,
    width: usize,
    height: usize,
) -> Option<[((usize, usize), f64); 4]> {
    Cell::locate(p, width, height).map(|c| c.weights())
}

/// Samples `img` at every location of `coords`.
///
/// Returns the warped image (shaped like `coords`) and the per-pixel mask of
/// sampleable locations. Masked pixels hold zeros.
pub fn bilinear_sample(img: &ImageBuffer, coords: &CoordGrid) -> (ImageBuffer, Vec<bool>) {
    let c = img.channels();
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0; coords.coords.len() * c];
    let mut mask = vec![false; coords.coords.len()];
    for (i, &p) in coords.coords.iter().enumerate() {
        if let Some(cell) = Cell::locate(p, w, h) {
            mask[i] = true;
            for ch in 0..c {
                data[i * c + ch] = cell.sample(img.data(), w, c, ch);
            }
        }
    }
    (
        ImageBuffer::from_raw(coords.width, coords.height, c, data),
        mask,
    )
}

/// Per-pixel, per-channel derivatives of a bilinear sample with respect to
/// its sampling coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradients {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `dI/dx`, interleaved by channel.
    pub dx: Vec<f64>,
    /// `dI/dy`, interleaved by channel.
    pub dy: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SampleGradients {
    pub fn at(&self, x: usize, y: usize, c: usize) -> (f64, f64) {
        let i = (y * self.width + x) * self.channels + c;
        (self.dx[i], self.dy[i])
    }
}

/// Gradients of [`bilinear_sample`] with respect to the sampling location;
/// zero on masked pixels.
pub fn bilinear_sample_grad(img: &ImageBuffer, coords: &CoordGrid) -> SampleGradients {
    let c = img.channels();
    let (w, h) = (img.width(), img.height());
    let n = coords.coords.len();
    let mut out = SampleGradients {
        width: coords.width,
        height: coords.height,
        channels: c,
        dx: vec![0.0; n * c],
        dy: vec![0.0; n * c],
        mask: vec![false; n],
    };
    for (i, &p) in coords.coords.iter().enumerate() {
        if let Some(cell) = Cell::locate(p, w, h) {
            out.mask[i] = true;
            for ch in 0..c {
                let (gx, gy) = cell.gradient(img.data(), w, c, ch);
                out.dx[i * c + ch] = gx;
                out.dy[i * c + ch] = gy;
            }
        }
    }
    out
}

/// Synthesizes the reference view by sampling `target` at the locations the
/// reference pixels move to under `pose`.
///
/// The mask is the conjunction of geometric validity (valid depth, point in
/// front of the target camera, inside the target image) and sampleability.
pub fn inverse_warp(
    target: &ImageBuffer,
    depth_r: &DepthMap,
    pose: &PoseSE3,
    k: &Intrinsics,
) -> Result<(ImageBuffer, Vec<bool>)> {
    target.check_dims(k.width, k.height)?;
    let flow = rigid_flow(depth_r, pose, k)?;
    let (warped, sample_mask) = bilinear_sample(target, &flow.target_coords());
    let mask = flow
        .mask
        .iter()
        .zip(&sample_mask)
        .map(|(a, b)| *a && *b)
        .collect();
    Ok((warped, mask))
}
