//! Dense image-grid containers: color images, depth maps and flow fields.

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;

/// `H x W x C` floating-point image with interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image size must be non-zero ({width}x{height})"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Config(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Config(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "image values must be finite and within [0, 1], found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from a per-pixel, per-channel function; values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    /// Wraps raw values without range validation. Used for intermediate
    /// results such as warped images whose masked pixels carry filler values.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "image shapes differ: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "image is {}x{}, expected {width}x{height}",
                self.width, self.height
            )))
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Channel-averaged intensity of pixel `(x, y)`.
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.pixel(x, y).iter().sum::<f64>() / self.channels as f64
    }

    /// Area-weighted resampling to `width x height`. Each output pixel is the
    /// coverage-weighted mean of the input pixels under its footprint.
    pub fn resize_area(&self, width: usize, height: usize) -> ImageBuffer {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let xs = footprints(self.width, width);
        let ys = footprints(self.height, height);
        let c = self.channels;
        let mut data = vec![0.0; width * height * c];
        for (oy, yspan) in ys.iter().enumerate() {
            for (ox, xspan) in xs.iter().enumerate() {
                let out = &mut data[(oy * width + ox) * c..(oy * width + ox + 1) * c];
                let mut total = 0.0;
                for &(iy, wy) in yspan {
                    for &(ix, wx) in xspan {
                        let w = wx * wy;
                        total += w;
                        for (o, v) in out.iter_mut().zip(self.pixel(ix, iy)) {
                            *o += w * v;
                        }
                    }
                }
                for o in out.iter_mut() {
                    *o = (*o / total).clamp(0.0, 1.0);
                }
            }
        }
        ImageBuffer::from_raw(width, height, c, data)
    }

    /// Halves the resolution by 2x2 box averaging (odd trailing rows or
    /// columns are dropped).
    pub fn downsample2(&self) -> ImageBuffer {
        let (w, h, c) = (self.width / 2, self.height / 2, self.channels);
        let mut data = Vec::with_capacity(w * h * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let s = self.get(2 * x, 2 * y, ch)
                        + self.get(2 * x + 1, 2 * y, ch)
                        + self.get(2 * x, 2 * y + 1, ch)
                        + self.get(2 * x + 1, 2 * y + 1, ch);
                    data.push(0.25 * s);
                }
            }
        }
        ImageBuffer::from_raw(w, h, c, data)
    }
}

/// For each output cell, the input cells it overlaps and their coverage.
fn footprints(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let start = o as f64 * scale;
            let end = (o + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(input);
            (first..last)
                .filter_map(|i| {
                    let cover = (end.min((i + 1) as f64) - start.max(i as f64)).max(0.0);
                    (cover > 1e-12).then_some((i, cover))
                })
                .collect()
        })
        .collect()
}

/// Per-pixel z-depth in meters with an explicit validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::Config(format!(
                "depth map buffers do not match {width}x{height}"
            )));
        }
        if let Some((v, _)) = values
            .iter()
            .zip(&valid)
            .find(|(v, ok)| **ok && !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::Domain(format!(
                "valid depth values must be positive and finite, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// Depth map where every positive finite value is valid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| *v > 0.0 && v.is_finite()).collect();
        Self::new(width, height, values, valid)
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        assert!(depth > 0.0, "depth must be positive");
        Self {
            width,
            height,
            values: vec![depth; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "depth map is {}x{}, expected {width}x{height}",
                self.width, self.height
            )))
        }
    }

    /// Mean of the valid depths, if any.
    pub fn mean_valid(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Halves the resolution by averaging the inverse depth of the valid
    /// pixels in each 2x2 block.
    pub fn downsample2(&self) -> DepthMap {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut values = vec![0.0; w * h];
        let mut valid = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                let mut n = 0;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    if let Some(d) = self.get(2 * x + dx, 2 * y + dy) {
                        sum += 1.0 / d;
                        n += 1;
                    }
                }
                if n > 0 {
                    values[y * w + x] = n as f64 / sum;
                    valid[y * w + x] = true;
                }
            }
        }
        DepthMap {
            width: w,
            height: h,
            values,
            valid,
        }
    }

    /// Resamples to `width x height` by taking, for each output pixel, the
    /// valid input pixel nearest to its center within its footprint.
    pub fn resize_nearest_valid(&self, width: usize, height: usize) -> DepthMap {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let reach_x = (0.5 * sx).ceil() as isize;
        let reach_y = (0.5 * sy).ceil() as isize;
        let mut values = vec![0.0; width * height];
        let mut valid = vec![false; width * height];
        for oy in 0..height {
            let cy = (oy as f64 + 0.5) * sy - 0.5;
            for ox in 0..width {
                let cx = (ox as f64 + 0.5) * sx - 0.5;
                let (bx, by) = (cx.round() as isize, cy.round() as isize);
                let mut best: Option<(f64, f64)> = None;
                for iy in (by - reach_y)..=(by + reach_y) {
                    for ix in (bx - reach_x)..=(bx + reach_x) {
                        if ix < 0
                            || iy < 0
                            || ix >= self.width as isize
                            || iy >= self.height as isize
                        {
                            continue;
                        }
                        if let Some(d) = self.get(ix as usize, iy as usize) {
                            let dist = (ix as f64 - cx).powi(2) + (iy as f64 - cy).powi(2);
                            if best.is_none_or(|(bd, _)| dist < bd) {
                                best = Some((dist, d));
                            }
                        }
                    }
                }
                if let Some((_, d)) = best {
                    values[oy * width + ox] = d;
                    valid[oy * width + ox] = true;
                }
            }
        }
        DepthMap {
            width,
            height,
            values,
            valid,
        }
    }
}

/// Per-pixel displacement `(du, dv)` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            du: vec![0.0; width * height],
            dv: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
    }

    /// Sampling locations `p - f(p)` for every pixel (the target coordinates
    /// under the `p_r - p_t` convention).
    pub fn target_coords(&self) -> CoordGrid {
        let mut coords = Vec::with_capacity(self.du.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                coords.push(PixelCoord::new(x as f64 - self.du[i], y as f64 - self.dv[i]));
            }
        }
        CoordGrid {
            width: self.width,
            height: self.height,
            coords,
        }
    }
}

/// One sampling location per output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    pub width: usize,
    pub height: usize,
    pub coords: Vec<PixelCoord>,
}

impl CoordGrid {
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| PixelCoord::new(x as f64, y as f64))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> PixelCoord) -> Self {
        let mut coords = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                coords.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            coords,
        }
    }
}
