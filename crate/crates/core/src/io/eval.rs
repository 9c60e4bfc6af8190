use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::image::DepthMap;

/// Root-mean-square depth error over pixels valid in both maps.
pub fn eval_depth(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    gt.check_dims(pred.width, pred.height)?;
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if pred.valid[i] && gt.valid[i] {
            let r = pred.values[i] - gt.values[i];
            sq += r * r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Domain("no pixel is valid in both depth maps".into()));
    }
    Ok((sq / n as f64).sqrt())
}

/// Translation and rotation RMSE of a set of relative poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseErrors {
    pub trans_rmse_m: f64,
    /// RMS of the geodesic angle between rotations, in degrees.
    pub rot_rmse_deg: f64,
}

pub fn eval_pose(pred: &[PoseSE3], gt: &[PoseSE3]) -> Result<PoseErrors> {
    if pred.len() != gt.len() {
        return Err(Error::Config(format!("{} predicted poses for {} ground-truth poses", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::Config("no poses to evaluate".into()));
    }
    let n = pred.len() as f64;
    let mut t2 = 0.0;
    let mut r2 = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        t2 += (p.translation - g.translation).norm_squared();
        let diff = PoseSE3::new(p.rotation.transpose() * g.rotation, Default::default());
        r2 += diff.rotation_angle().to_degrees().powi(2);
    }
    Ok(PoseErrors {
        trans_rmse_m: (t2 / n).sqrt(),
        rot_rmse_deg: (r2 / n).sqrt(),
    })
}
