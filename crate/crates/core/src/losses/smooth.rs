use super::MaskedMean;
use crate::error::Result;
use crate::image::{DepthMap, ImageBuffer};

/// Edge-aware smoothness of mean-normalized depth and, optionally, its
/// gradient with respect to the raw depth values.
///
/// Uses forward differences; a pixel contributes when it and its right and
/// lower neighbors are all valid.
pub(crate) fn smoothness_with_grad(
    depth: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    img: &ImageBuffer,
    want_grad: bool,
) -> (MaskedMean, Option<Vec<f64>>) {
    let (sum_d, n_valid) = depth
        .iter()
        .zip(valid)
        .filter(|(_, ok)| **ok)
        .fold((0.0, 0usize), |(s, n), (d, _)| (s + d, n + 1));
    if n_valid == 0 || width < 2 || height < 2 {
        return (MaskedMean::default(), want_grad.then(|| vec![0.0; depth.len()]));
    }
    let mean = sum_d / n_valid as f64;
    let inv_mean = 1.0 / mean;

    let mut sum = 0.0;
    let mut count = 0usize;
    let mut g_norm = want_grad.then(|| vec![0.0; depth.len()]);
    for y in 0..height - 1 {
        for x in 0..width - 1 {
            let i = y * width + x;
            let (right, down) = (i + 1, i + width);
            if !(valid[i] && valid[right] && valid[down]) {
                continue;
            }
            let wx = (-img_step(img, x, y, x + 1, y)).exp();
            let wy = (-img_step(img, x, y, x, y + 1)).exp();
            let dx = (depth[right] - depth[i]) * inv_mean;
            let dy = (depth[down] - depth[i]) * inv_mean;
            sum += dx.abs() * wx + dy.abs() * wy;
            count += 1;
            if let Some(g) = g_norm.as_mut() {
                let (sx, sy) = (signum0(dx) * wx, signum0(dy) * wy);
                g[right] += sx;
                g[down] += sy;
                g[i] -= sx + sy;
            }
        }
    }
    let result = MaskedMean::from_sum(sum, count);
    let grad = g_norm.map(|mut g| {
        if count == 0 {
            return vec![0.0; depth.len()];
        }
        // g holds ∂(sum)/∂n; fold in the mean over terms and the normalization n = D / μ.
        let scale = 1.0 / count as f64;
        let coupling: f64 = g
            .iter()
            .zip(depth)
            .zip(valid)
            .filter(|(_, ok)| **ok)
            .map(|((gi, d), _)| gi * d * inv_mean)
            .sum();
        let shared = coupling * inv_mean / n_valid as f64;
        for ((gi, _), ok) in g.iter_mut().zip(depth).zip(valid) {
            *gi = if *ok { scale * (*gi * inv_mean - shared) } else { 0.0 };
        }
        g
    });
    (result, grad)
}

#[inline]
fn signum0(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// Channel-averaged absolute intensity difference between two pixels.
#[inline]
fn img_step(img: &ImageBuffer, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let a = img.pixel(x0, y0);
    let b = img.pixel(x1, y1);
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>() / a.len() as f64
}

/// Edge-aware depth smoothness `|∇D| · exp(-|∇I|)` on depth divided by its
/// mean, averaged over pixels where both forward differences exist.
pub fn loss_smooth(depth: &DepthMap, img: &ImageBuffer) -> Result<MaskedMean> {
    depth.check_dims(img.width(), img.height())?;
    Ok(smoothness_with_grad(&depth.values, &depth.valid, depth.width, depth.height, img, false).0)
}
