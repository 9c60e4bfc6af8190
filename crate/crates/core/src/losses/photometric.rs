use super::consistency::ConsistencyMask;
use super::ssim::WindowStats;
use super::MaskedMean;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::{DepthMap, ImageBuffer};
use crate::sampling::inverse_warp;

/// Weight of the SSIM part of the dissimilarity; the L1 part gets the rest.
pub const PHOTOMETRIC_SSIM_WEIGHT: f64 = 0.85;

/// Pixels that contribute to the photometric term: interior pixels whose full
/// 3x3 SSIM window lies inside `mask`.
pub fn photometric_support(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; width * height];
    if width < 3 || height < 3 {
        return out;
    }
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            out[y * width + x] = (y - 1..=y + 1)
                .all(|wy| (x - 1..=x + 1).all(|wx| mask[wy * width + wx]));
        }
    }
    out
}

/// Residuals this small come from coordinate round-off in the warp and take
/// the zero subgradient of `|r|`.
const RESIDUAL_ROUNDOFF: f64 = 1e-12;

/// `α (1 - SSIM) / 2 + (1 - α) |a - b|` at one interior pixel, both parts
/// averaged over channels.
pub(crate) struct PixelDissimilarity;

impl PixelDissimilarity {
    #[inline]
    pub fn value(a: &[f64], b: &[f64], width: usize, height: usize, channels: usize, x: usize, y: usize) -> f64 {
        let mut ssim = 0.0;
        let mut l1 = 0.0;
        let i = (y * width + x) * channels;
        for c in 0..channels {
            ssim += WindowStats::gather(a, b, width, height, channels, c, x, y).ssim();
            l1 += (a[i + c] - b[i + c]).abs();
        }
        let inv_c = 1.0 / channels as f64;
        PHOTOMETRIC_SSIM_WEIGHT * 0.5 * (1.0 - ssim * inv_c) + (1.0 - PHOTOMETRIC_SSIM_WEIGHT) * l1 * inv_c
    }

    /// Adds `scale · ∂value/∂b` into `grad` (laid out like `b`).
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_grad(
        a: &[f64],
        b: &[f64],
        width: usize,
        height: usize,
        channels: usize,
        x: usize,
        y: usize,
        scale: f64,
        grad: &mut [f64],
    ) {
        let inv_c = 1.0 / channels as f64;
        let ssim_scale = -PHOTOMETRIC_SSIM_WEIGHT * 0.5 * inv_c * scale;
        let l1_scale = (1.0 - PHOTOMETRIC_SSIM_WEIGHT) * inv_c * scale;
        for c in 0..channels {
            let st = WindowStats::gather(a, b, width, height, channels, c, x, y);
            let (_, d_mu, d_var, d_cov) = st.ssim_with_partials();
            let inv_n = 1.0 / st.n;
            for wy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for wx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    let j = (wy * width + wx) * channels + c;
                    let d = d_mu * inv_n
                        + d_var * 2.0 * (b[j] - st.mu_b) * inv_n
                        + d_cov * (a[j] - st.mu_a) * inv_n;
                    grad[j] += ssim_scale * d;
                }
            }
            let i = (y * width + x) * channels + c;
            let r = b[i] - a[i];
            if r.abs() > RESIDUAL_ROUNDOFF {
                grad[i] += l1_scale * r.signum();
            }
        }
    }
}

/// Mean dissimilarity between `reference` and `warped` over the pixels
/// supported by `mask` (see [`photometric_support`]).
pub fn f_diss(reference: &ImageBuffer, warped: &ImageBuffer, mask: &[bool]) -> Result<MaskedMean> {
    reference.check_same_shape(warped)?;
    let (w, h, c) = (reference.width(), reference.height(), reference.channels());
    if mask.len() != w * h {
        return Err(Error::Config(format!(
            "mask has {} entries, expected {}",
            mask.len(),
            w * h
        )));
    }
    let support = photometric_support(mask, w, h);
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            if support[y * w + x] {
                sum += PixelDissimilarity::value(reference.data(), warped.data(), w, h, c, x, y);
                count += 1;
            }
        }
    }
    Ok(MaskedMean::from_sum(sum, count))
}

/// Dissimilarity between the reference image and the target warped into the
/// reference view, restricted to sampleable pixels accepted by the optional
/// consistency mask.
pub fn loss_photometric(
    reference: &ImageBuffer,
    target: &ImageBuffer,
    depth_r: &DepthMap,
    pose: &PoseSE3,
    k: &Intrinsics,
    consistency: Option<&ConsistencyMask>,
) -> Result<MaskedMean> {
    reference.check_same_shape(target)?;
    let (warped, mut mask) = inverse_warp(target, depth_r, pose, k)?;
    if let Some(cm) = consistency {
        if cm.accept.len() != mask.len() {
            return Err(Error::Config("consistency mask size mismatch".into()));
        }
        for (m, a) in mask.iter_mut().zip(&cm.accept) {
            *m &= *a;
        }
    }
    f_diss(reference, &warped, &mask)
}
