use crate::error::Result;
use crate::image::ImageBuffer;

/// Luminance stabilizer `(0.01 L)^2` for a unit value range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
/// Contrast stabilizer `(0.03 L)^2` for a unit value range.
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Local statistics of two signals over a 3x3 window (population moments).
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowStats {
    pub mu_a: f64,
    pub mu_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
    pub n: f64,
}

impl WindowStats {
    /// Statistics of channel `c` of two interleaved buffers over the window
    /// centered on `(x, y)`, clipped to the image.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn gather(
        a: &[f64],
        b: &[f64],
        width: usize,
        height: usize,
        channels: usize,
        c: usize,
        x: usize,
        y: usize,
    ) -> Self {
        let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for wy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
            for wx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                let i = (wy * width + wx) * channels + c;
                let (va, vb) = (a[i], b[i]);
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
                n += 1.0;
            }
        }
        let mu_a = sa / n;
        let mu_b = sb / n;
        Self {
            mu_a,
            mu_b,
            var_a: saa / n - mu_a * mu_a,
            var_b: sbb / n - mu_b * mu_b,
            cov: sab / n - mu_a * mu_b,
            n,
        }
    }

    #[inline]
    fn terms(&self) -> (f64, f64, f64, f64) {
        (
            2.0 * self.mu_a * self.mu_b + SSIM_C1,
            2.0 * self.cov + SSIM_C2,
            self.mu_a * self.mu_a + self.mu_b * self.mu_b + SSIM_C1,
            self.var_a + self.var_b + SSIM_C2,
        )
    }

    #[inline]
    pub fn ssim(&self) -> f64 {
        let (a1, a2, b1, b2) = self.terms();
        (a1 * a2) / (b1 * b2)
    }

    /// SSIM and its partial derivatives with respect to `b`'s window mean,
    /// variance and the covariance.
    #[inline]
    pub fn ssim_with_partials(&self) -> (f64, f64, f64, f64) {
        let (a1, a2, b1, b2) = self.terms();
        let denom = b1 * b2;
        let s = (a1 * a2) / denom;
        let d_mu_b = 2.0 * self.mu_a * a2 / denom - 2.0 * self.mu_b * s / b1;
        let d_var_b = -s / b2;
        let d_cov = 2.0 * a1 / denom;
        (s, d_mu_b, d_var_b, d_cov)
    }
}

/// Per-pixel SSIM over a 3x3 uniform window, averaged over channels.
///
/// Windows are clipped at the image border.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<Vec<f64>> {
    a.check_same_shape(b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (0..c)
                .map(|ch| WindowStats::gather(a.data(), b.data(), w, h, c, ch, x, y).ssim())
                .sum();
            out.push(s / c as f64);
        }
    }
    Ok(out)
}
