//! The four loss terms and their weighted combination.
//!
//! Every reduction is a mean over the contributing pixels, so the weights keep
//! their meaning across resolutions and mask sizes. A mean over an empty set
//! evaluates to zero and is flagged through [`MaskedMean::is_empty`].

mod consistency;
mod photometric;
mod smooth;
mod ssim;
mod weak;

pub use consistency::{consistency_check, loss_consistency, ConsistencyMask, ConsistencyParams};
pub(crate) use consistency::{apply, projection_jacobian, BackwardFlow, DeltaFlow};
pub use photometric::{f_diss, loss_photometric, photometric_support, PHOTOMETRIC_SSIM_WEIGHT};
pub(crate) use photometric::PixelDissimilarity;
pub use smooth::loss_smooth;
pub(crate) use smooth::smoothness_with_grad;
pub use ssim::{ssim, SSIM_C1, SSIM_C2};
pub use weak::loss_weak;
pub(crate) use weak::weak_with_grad;

use crate::error::{Error, Result};
use crate::objective::{Problem, Target, Variables};
use crate::geometry::{Intrinsics, PoseParams};
use crate::image::{DepthMap, ImageBuffer};

/// Relative weights of the photometric, smoothness, consistency and weak
/// supervision terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_w: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 1.0,
            lambda_d: 0.5,
            lambda_c: 0.2,
            lambda_w: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_p: f64, lambda_d: f64, lambda_c: f64, lambda_w: f64) -> Result<Self> {
        let w = Self {
            lambda_p,
            lambda_d,
            lambda_c,
            lambda_w,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_p, self.lambda_d, self.lambda_c, self.lambda_w];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be non-negative: {all:?}")))
        }
    }

    /// `λ_P·photo + λ_D·smooth + λ_C·consist + λ_W·weak`.
    pub fn combine(&self, photo: f64, smooth: f64, consist: f64, weak: f64) -> f64 {
        self.lambda_p * photo + self.lambda_d * smooth + self.lambda_c * consist + self.lambda_w * weak
    }
}

/// Values of the individual terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_photo: f64,
    pub l_smooth: f64,
    pub l_consist: f64,
    pub l_weak: f64,
    pub l_total: f64,
    pub valid_pixel_count: usize,
}

impl LossBreakdown {
    pub fn from_terms(
        weights: &LossWeights,
        l_photo: f64,
        l_smooth: f64,
        l_consist: f64,
        l_weak: f64,
        valid_pixel_count: usize,
    ) -> Self {
        Self {
            l_photo,
            l_smooth,
            l_consist,
            l_weak,
            l_total: weights.combine(l_photo, l_smooth, l_consist, l_weak),
            valid_pixel_count,
        }
    }

    /// CSV header matching [`LossBreakdown::csv_row`].
    pub const CSV_HEADER: &'static str = "iter,l_photo,l_smooth,l_consist,l_weak,l_total,valid_pixels";

    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{},{},{}",
            self.l_photo, self.l_smooth, self.l_consist, self.l_weak, self.l_total, self.valid_pixel_count
        )
    }
}

/// Result of a masked mean: the value and how many samples contributed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaskedMean {
    pub value: f64,
    pub count: usize,
}

impl MaskedMean {
    pub(crate) fn from_sum(sum: f64, count: usize) -> Self {
        Self {
            value: if count > 0 { sum / count as f64 } else { 0.0 },
            count,
        }
    }

    /// No sample contributed; the value is zero by convention.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// One `(reference, target)` pair for [`loss_total`].
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub target: &'a ImageBuffer,
    /// Target-frame depth; the consistency term is skipped without it.
    pub target_depth: Option<&'a DepthMap>,
    pub pose: PoseParams,
}

/// State of a reference frame and its targets.
#[derive(Debug, Clone)]
pub struct PairState<'a> {
    pub intrinsics: Intrinsics,
    pub reference: &'a ImageBuffer,
    pub reference_depth: &'a DepthMap,
    pub gt_depth: Option<&'a DepthMap>,
    pub pairs: Vec<PairInput<'a>>,
    pub consistency: ConsistencyParams,
}

/// Weighted total loss over all pairs; each term is averaged over the pairs
/// that define it.
pub fn loss_total(state: &PairState<'_>, weights: &LossWeights) -> Result<LossBreakdown> {
    let problem = Problem::new(
        state.intrinsics,
        state.reference,
        state
            .pairs
            .iter()
            .map(|p| Target {
                image: p.target,
                depth: p.target_depth,
            })
            .collect(),
        state.gt_depth,
        *weights,
        state.consistency,
    )?;
    let vars = Variables::from_depth(
        state.reference_depth,
        state.pairs.iter().map(|p| p.pose).collect(),
    )?;
    Ok(problem.evaluate_fresh(&vars)?.breakdown)
}
