use super::MaskedMean;
use crate::error::Result;
use crate::image::DepthMap;

/// Root-mean-square depth error against partial ground truth, and its
/// gradient with respect to the predicted depths. Pixels where either map is
/// invalid are skipped.
pub(crate) fn weak_with_grad(
    pred: &[f64],
    pred_valid: &[bool],
    gt: Option<&DepthMap>,
    want_grad: bool,
) -> (MaskedMean, Option<Vec<f64>>) {
    let Some(gt) = gt else {
        return (MaskedMean::default(), want_grad.then(|| vec![0.0; pred.len()]));
    };
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if pred_valid[i] && gt.valid[i] {
            let r = pred[i] - gt.values[i];
            sq += r * r;
            n += 1;
        }
    }
    let rms = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };
    let grad = want_grad.then(|| {
        let mut g = vec![0.0; pred.len()];
        if rms > 0.0 {
            let scale = 1.0 / (n as f64 * rms);
            for i in 0..pred.len() {
                if pred_valid[i] && gt.valid[i] {
                    g[i] = scale * (pred[i] - gt.values[i]);
                }
            }
        }
        g
    });
    (MaskedMean { value: rms, count: n }, grad)
}

/// RMS difference between predicted and ground-truth depth over the pixels
/// where both are valid; zero without ground truth.
pub fn loss_weak(pred: &DepthMap, gt: Option<&DepthMap>) -> Result<MaskedMean> {
    if let Some(g) = gt {
        g.check_dims(pred.width, pred.height)?;
    }
    Ok(weak_with_grad(&pred.values, &pred.valid, gt, false).0)
}
