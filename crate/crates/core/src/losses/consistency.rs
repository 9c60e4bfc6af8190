use nalgebra::{Matrix3, Vector3};

use super::MaskedMean;
use crate::error::{Error, Result};
use crate::geometry::{project_unchecked, Intrinsics, PixelCoord, PoseSE3, MIN_DEPTH};
use crate::image::{DepthMap, FlowField};
use crate::sampling::Cell;

/// Thresholds of the forward-backward check: a pixel is accepted when
/// `|Δf| < max(alpha, beta |f|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyParams {
    /// Absolute tolerance in pixels.
    pub alpha: f64,
    /// Tolerance relative to the forward flow magnitude.
    pub beta: f64,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta: 0.05,
        }
    }
}

impl ConsistencyParams {
    #[inline]
    pub fn accepts(&self, delta: (f64, f64), forward: (f64, f64)) -> bool {
        let d = delta.0.hypot(delta.1);
        let f = forward.0.hypot(forward.1);
        d < self.alpha.max(self.beta * f)
    }
}

/// Reference pixels where forward and backward flow agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMask {
    pub width: usize,
    pub height: usize,
    pub accept: Vec<bool>,
    pub alpha: f64,
    pub beta: f64,
}

impl ConsistencyMask {
    pub fn accepted_count(&self) -> usize {
        self.accept.iter().filter(|a| **a).count()
    }
}

/// Backward flow `q - q_r` on the target grid, where `q_r` is target pixel `q`
/// mapped back into the reference view with the target depth and the inverse
/// pose. Optionally carries the derivatives of both components with respect
/// to the six pose parameters of the forward pose.
pub(crate) struct BackwardFlow {
    pub width: usize,
    pub bx: Vec<f64>,
    pub by: Vec<f64>,
    pub valid: Vec<bool>,
    /// `[∂bx/∂θ (6), ∂by/∂θ (6)]` per pixel.
    pub derivs: Option<Vec<[f64; 12]>>,
}

impl BackwardFlow {
    /// `rot_derivs` are `∂R/∂(rx, ry, rz)` of the forward pose; when given, the
    /// pose derivatives of the field are computed too.
    pub fn compute(
        depth_t: &DepthMap,
        pose: &PoseSE3,
        k: &Intrinsics,
        rot_derivs: Option<&[Matrix3<f64>; 3]>,
    ) -> Self {
        let (w, h) = (depth_t.width, depth_t.height);
        let n = w * h;
        let rt = pose.rotation.transpose();
        let mut out = BackwardFlow {
            width: w,
            bx: vec![0.0; n],
            by: vec![0.0; n],
            valid: vec![false; n],
            derivs: rot_derivs.map(|_| vec![[0.0; 12]; n]),
        };
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !depth_t.valid[i] {
                    continue;
                }
                let q = PixelCoord::new(x as f64, y as f64);
                let local = k.unproject_ray(q) * depth_t.values[i] - pose.translation;
                let xr = rt * local;
                if xr.z <= MIN_DEPTH {
                    continue;
                }
                let qr = project_unchecked(&xr, k);
                out.bx[i] = q.x - qr.x;
                out.by[i] = q.y - qr.y;
                out.valid[i] = true;
                if let (Some(dr), Some(derivs)) = (rot_derivs, out.derivs.as_mut()) {
                    let jac = projection_jacobian(&xr, k);
                    let d = &mut derivs[i];
                    for t in 0..3 {
                        // ∂xr/∂T_t = -Rᵀ e_t
                        let dx = -rt.column(t).into_owned();
                        let (du, dv) = apply(&jac, &dx);
                        d[t] = -du;
                        d[6 + t] = -dv;
                    }
                    for (r, dr) in dr.iter().enumerate() {
                        let dx = dr.transpose() * local;
                        let (du, dv) = apply(&jac, &dx);
                        d[3 + r] = -du;
                        d[9 + r] = -dv;
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn cell_valid(&self, cell: &Cell) -> bool {
        let w = self.width;
        self.valid[cell.y0 * w + cell.x0]
            && self.valid[cell.y0 * w + cell.x1]
            && self.valid[cell.y1 * w + cell.x0]
            && self.valid[cell.y1 * w + cell.x1]
    }

    #[inline]
    pub fn sample(&self, cell: &Cell) -> (f64, f64) {
        (
            cell.sample(&self.bx, self.width, 1, 0),
            cell.sample(&self.by, self.width, 1, 0),
        )
    }

    /// `[[∂bx/∂x, ∂bx/∂y], [∂by/∂x, ∂by/∂y]]` of the interpolated field.
    #[inline]
    pub fn spatial_jacobian(&self, cell: &Cell) -> [[f64; 2]; 2] {
        let (a, b) = cell.gradient(&self.bx, self.width, 1, 0);
        let (c, d) = cell.gradient(&self.by, self.width, 1, 0);
        [[a, b], [c, d]]
    }

    /// Interpolated pose derivatives at the cell location.
    #[inline]
    pub fn sample_derivs(&self, cell: &Cell) -> [f64; 12] {
        let derivs = self.derivs.as_ref().expect("derivatives were not computed");
        let mut out = [0.0; 12];
        for ((x, y), wgt) in cell.weights() {
            let d = &derivs[y * self.width + x];
            for (o, v) in out.iter_mut().zip(d) {
                *o += wgt * v;
            }
        }
        out
    }
}

/// Forward-backward flow difference at one reference pixel.
pub(crate) struct DeltaFlow;

impl DeltaFlow {
    /// `Δf = (p - p_t) + b(p_t)`: zero when the backward flow, resampled at
    /// the forward-warped location, exactly undoes the forward flow.
    #[inline]
    pub fn at(p: PixelCoord, p_t: PixelCoord, back: &BackwardFlow, cell: &Cell) -> (f64, f64) {
        let (bx, by) = back.sample(cell);
        (p.x - p_t.x + bx, p.y - p_t.y + by)
    }
}

/// `[[∂u/∂X], [∂v/∂X]]` of the pinhole projection at camera point `x`.
#[inline]
pub(crate) fn projection_jacobian(x: &Vector3<f64>, k: &Intrinsics) -> [[f64; 3]; 2] {
    let iz = 1.0 / x.z;
    [
        [k.fx * iz, 0.0, -k.fx * x.x * iz * iz],
        [0.0, k.fy * iz, -k.fy * x.y * iz * iz],
    ]
}

#[inline]
pub(crate) fn apply(jac: &[[f64; 3]; 2], v: &Vector3<f64>) -> (f64, f64) {
    (
        jac[0][0] * v.x + jac[0][1] * v.y + jac[0][2] * v.z,
        jac[1][0] * v.x + jac[1][1] * v.y + jac[1][2] * v.z,
    )
}

/// Forward-backward consistency of the rigid flows between two views.
///
/// Returns the acceptance mask and the flow difference `Δf` at each
/// reference pixel (its mask marks where both flows are defined).
pub fn consistency_check(
    depth_r: &DepthMap,
    depth_t: &DepthMap,
    pose_rt: &PoseSE3,
    k: &Intrinsics,
    params: ConsistencyParams,
) -> Result<(ConsistencyMask, FlowField)> {
    depth_r.check_dims(k.width, k.height)?;
    depth_t.check_dims(k.width, k.height)?;
    let (w, h) = (k.width, k.height);
    let back = BackwardFlow::compute(depth_t, pose_rt, k, None);
    let mut delta = FlowField::zeros(w, h);
    let mut accept = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !depth_r.valid[i] {
                continue;
            }
            let p = PixelCoord::new(x as f64, y as f64);
            let Some((p_t, _)) = crate::geometry::warp_coord(p, depth_r.values[i], pose_rt, k) else {
                continue;
            };
            let Some(cell) = Cell::locate(p_t, w, h) else {
                continue;
            };
            if !back.cell_valid(&cell) {
                continue;
            }
            let d = DeltaFlow::at(p, p_t, &back, &cell);
            delta.du[i] = d.0;
            delta.dv[i] = d.1;
            delta.mask[i] = true;
            accept[i] = params.accepts(d, (p.x - p_t.x, p.y - p_t.y));
        }
    }
    Ok((
        ConsistencyMask {
            width: w,
            height: h,
            accept,
            alpha: params.alpha,
            beta: params.beta,
        },
        delta,
    ))
}

/// Mean L1 norm of the flow difference over accepted pixels.
pub fn loss_consistency(delta: &FlowField, mask: &ConsistencyMask) -> Result<MaskedMean> {
    if delta.du.len() != mask.accept.len() {
        return Err(Error::Config(format!(
            "flow has {} pixels, mask has {}",
            delta.du.len(),
            mask.accept.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..delta.du.len() {
        if mask.accept[i] && delta.mask[i] {
            sum += delta.du[i].abs() + delta.dv[i].abs();
            n += 1;
        }
    }
    Ok(MaskedMean::from_sum(sum, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseParams;

    fn k() -> Intrinsics {
        Intrinsics::new(40.0, 40.0, 15.5, 11.5, 32, 24).unwrap()
    }

    #[test]
    fn zero_flow_is_accepted() {
        let d = DepthMap::constant(32, 24, 2.0);
        let (mask, delta) = consistency_check(&d, &d, &PoseSE3::identity(), &k(), ConsistencyParams::default()).unwrap();
        assert!(mask.accept.iter().all(|a| *a));
        assert!(delta.du.iter().chain(&delta.dv).all(|v| v.abs() < 1e-12));
        assert_eq!(loss_consistency(&delta, &mask).unwrap().value, 0.0);
    }

    #[test]
    fn fronto_parallel_translation_is_consistent() {
        let d = DepthMap::constant(32, 24, 2.0);
        let pose = PoseParams::new(0.05, -0.02, 0.0, 0.0, 0.0, 0.0).to_pose();
        let (mask, delta) = consistency_check(&d, &d, &pose, &k(), ConsistencyParams::default()).unwrap();
        let defined = delta.mask.iter().filter(|m| **m).count();
        assert!(defined > 500);
        for i in 0..delta.du.len() {
            if delta.mask[i] {
                assert!(delta.du[i].abs() < 1e-9 && delta.dv[i].abs() < 1e-9);
                assert!(mask.accept[i]);
            }
        }
    }

    #[test]
    fn unit_difference_gives_two() {
        let mut delta = FlowField::zeros(3, 3);
        delta.du.iter_mut().for_each(|v| *v = 1.0);
        delta.dv.iter_mut().for_each(|v| *v = -1.0);
        delta.mask.iter_mut().for_each(|v| *v = true);
        let mask = ConsistencyMask {
            width: 3,
            height: 3,
            accept: vec![true; 9],
            alpha: 3.0,
            beta: 0.05,
        };
        assert_eq!(loss_consistency(&delta, &mask).unwrap().value, 2.0);
    }

    #[test]
    fn thresholds() {
        let p = ConsistencyParams::default();
        assert!(p.accepts((2.9, 0.0), (0.0, 0.0)));
        assert!(!p.accepts((3.0, 0.0), (0.0, 0.0)));
        assert!(p.accepts((3.5, 0.0), (100.0, 0.0)));
        assert!(!p.accepts((5.5, 0.0), (100.0, 0.0)));
    }
}
