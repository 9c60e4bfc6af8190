//! The total loss over a reference frame and its targets, as a function of
//! the relative poses and the reference inverse depth.
//!
//! Evaluation is split in two stages. [`Problem::masks`] decides which pixels
//! take part (sampleable, consistent, inside the SSIM support); the
//! evaluation functions then compute the loss for fixed masks. Gradients are
//! exact for fixed masks: the hard indicator sets carry no derivative.
//! While masks are frozen, sampling locations that drift slightly outside the
//! image extrapolate linearly from the border cell so the loss stays
//! continuous in the variables.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{rotation_derivatives, Intrinsics, PixelCoord, PoseParams, PoseSE3, MIN_DEPTH};
use crate::image::{DepthMap, ImageBuffer};
use crate::losses::{
    photometric_support, smoothness_with_grad, weak_with_grad, BackwardFlow, ConsistencyParams,
    DeltaFlow, LossBreakdown, LossWeights, MaskedMean, PixelDissimilarity,
};
use crate::losses::{apply, projection_jacobian};
use crate::sampling::Cell;

/// A target view of the reference frame.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub image: &'a ImageBuffer,
    /// Target-frame depth. Without it the pair has no consistency term and
    /// no consistency masking.
    pub depth: Option<&'a DepthMap>,
}

/// Images, weights and fixed data of one loss evaluation.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub intrinsics: Intrinsics,
    pub reference: &'a ImageBuffer,
    pub targets: Vec<Target<'a>>,
    pub gt_depth: Option<&'a DepthMap>,
    pub weights: LossWeights,
    pub consistency: ConsistencyParams,
}

/// Optimization variables: one pose per target and the per-pixel inverse
/// depth of the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Variables {
    pub width: usize,
    pub height: usize,
    pub poses: Vec<PoseParams>,
    pub inv_depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Variables {
    pub fn from_depth(depth: &DepthMap, poses: Vec<PoseParams>) -> Result<Self> {
        let inv_depth = depth
            .values
            .iter()
            .zip(&depth.valid)
            .map(|(d, ok)| if *ok { 1.0 / d } else { 0.0 })
            .collect();
        Ok(Self {
            width: depth.width,
            height: depth.height,
            poses,
            inv_depth,
            valid: depth.valid.clone(),
        })
    }

    pub fn depth_values(&self) -> Vec<f64> {
        self.inv_depth
            .iter()
            .zip(&self.valid)
            .map(|(r, ok)| if *ok { 1.0 / r } else { 0.0 })
            .collect()
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.depth_values(),
            valid: self.valid.clone(),
        }
    }
}

/// Pixel sets of one pair, held fixed while differentiating.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMasks {
    /// Sampleable and (when checked) consistent reference pixels.
    pub photometric: Vec<bool>,
    /// Pixels whose dissimilarity enters the photometric mean.
    pub support: Vec<bool>,
    /// Pixels accepted by the forward-backward check, if it ran.
    pub accepted: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenMasks {
    pub pairs: Vec<PairMasks>,
}

/// Loss value with per-pair detail.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub photometric: Vec<MaskedMean>,
    pub consistency: Vec<Option<MaskedMean>>,
    pub smooth: MaskedMean,
    pub weak: MaskedMean,
}

impl Evaluation {
    /// Index of the first pair whose photometric term has no valid pixel.
    pub fn empty_photometric_pair(&self) -> Option<usize> {
        self.photometric.iter().position(|m| m.is_empty())
    }
}

/// `∂L_T` with respect to each pose and each inverse depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub poses: Vec<[f64; 6]>,
    pub inv_depth: Vec<f64>,
}

impl Gradient {
    pub fn is_finite(&self) -> bool {
        self.poses.iter().flatten().chain(&self.inv_depth).all(|v| v.is_finite())
    }
}

struct PairOutput {
    photo: MaskedMean,
    consist: Option<MaskedMean>,
    grad: Option<PairGrad>,
}

struct PairGrad {
    pose_photo: [f64; 6],
    pose_consist: [f64; 6],
    rho_photo: Vec<f64>,
    rho_consist: Vec<f64>,
}

/// Target location of a reference pixel and its derivatives.
struct WarpJet {
    p_t: PixelCoord,
    d_pose: [[f64; 6]; 2],
    d_rho: [f64; 2],
}

#[inline]
fn warp_point(ray: &Vector3<f64>, rho: f64, pose: &PoseSE3) -> Vector3<f64> {
    pose.transform_point(&(ray / rho))
}

#[inline]
fn warp_jet(
    ray: &Vector3<f64>,
    rho: f64,
    pose: &PoseSE3,
    dr: &[Matrix3<f64>; 3],
    k: &Intrinsics,
) -> WarpJet {
    let xr = ray / rho;
    let rotated = pose.rotation * xr;
    let x = rotated + pose.translation;
    let jac = projection_jacobian(&x, k);
    let mut d_pose = [[0.0; 6]; 2];
    for t in 0..3 {
        d_pose[0][t] = jac[0][t];
        d_pose[1][t] = jac[1][t];
    }
    for (r, d) in dr.iter().enumerate() {
        let (du, dv) = apply(&jac, &(d * xr));
        d_pose[0][3 + r] = du;
        d_pose[1][3 + r] = dv;
    }
    let (du, dv) = apply(&jac, &(-rotated / rho));
    WarpJet {
        p_t: project(&x, k),
        d_pose,
        d_rho: [du, dv],
    }
}

#[inline]
fn project(x: &Vector3<f64>, k: &Intrinsics) -> PixelCoord {
    PixelCoord::new(k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy)
}

impl<'a> Problem<'a> {
    pub fn new(
        intrinsics: Intrinsics,
        reference: &'a ImageBuffer,
        targets: Vec<Target<'a>>,
        gt_depth: Option<&'a DepthMap>,
        weights: LossWeights,
        consistency: ConsistencyParams,
    ) -> Result<Self> {
        weights.validate()?;
        let (w, h) = (intrinsics.width, intrinsics.height);
        reference.check_dims(w, h)?;
        if targets.is_empty() {
            return Err(Error::Config("at least one target view is required".into()));
        }
        for t in &targets {
            reference.check_same_shape(t.image)?;
            if let Some(d) = t.depth {
                d.check_dims(w, h)?;
            }
        }
        if let Some(g) = gt_depth {
            g.check_dims(w, h)?;
        }
        Ok(Self {
            intrinsics,
            reference,
            targets,
            gt_depth,
            weights,
            consistency,
        })
    }

    fn check_vars(&self, vars: &Variables) -> Result<()> {
        if vars.poses.len() != self.targets.len() {
            return Err(Error::Config(format!(
                "{} poses for {} targets",
                vars.poses.len(),
                self.targets.len()
            )));
        }
        if vars.width != self.intrinsics.width || vars.height != self.intrinsics.height {
            return Err(Error::Config("variable grid does not match the intrinsics".into()));
        }
        Ok(())
    }

    /// Decides the participating pixels of every pair at `vars`.
    pub fn masks(&self, vars: &Variables) -> Result<FrozenMasks> {
        self.check_vars(vars)?;
        let pairs = (0..self.targets.len())
            .into_par_iter()
            .map(|j| self.pair_masks(j, vars))
            .collect();
        Ok(FrozenMasks { pairs })
    }

    fn pair_masks(&self, j: usize, vars: &Variables) -> PairMasks {
        let k = &self.intrinsics;
        let (w, h) = (k.width, k.height);
        let pose = vars.poses[j].to_pose();
        let back = self.targets[j]
            .depth
            .map(|d| BackwardFlow::compute(d, &pose, k, None));
        let rows: Vec<(Vec<bool>, Vec<bool>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut photo_row = vec![false; w];
                let mut acc_row = vec![false; w];
                for x in 0..w {
                    let i = y * w + x;
                    if !vars.valid[i] {
                        continue;
                    }
                    let p = PixelCoord::new(x as f64, y as f64);
                    let xt = warp_point(&k.unproject_ray(p), vars.inv_depth[i], &pose);
                    if xt.z <= MIN_DEPTH {
                        continue;
                    }
                    let p_t = project(&xt, k);
                    let Some(cell) = Cell::locate(p_t, w, h) else {
                        continue;
                    };
                    match &back {
                        Some(back) => {
                            if back.cell_valid(&cell) {
                                let d = DeltaFlow::at(p, p_t, back, &cell);
                                if self.consistency.accepts(d, (p.x - p_t.x, p.y - p_t.y)) {
                                    acc_row[x] = true;
                                    photo_row[x] = true;
                                }
                            }
                        }
                        None => photo_row[x] = true,
                    }
                }
                (photo_row, acc_row)
            })
            .collect();
        let mut photometric = Vec::with_capacity(w * h);
        let mut accepted = Vec::with_capacity(w * h);
        for (p, a) in rows {
            photometric.extend(p);
            accepted.extend(a);
        }
        let accepted = back.is_some().then_some(accepted);
        let support = photometric_support(&photometric, w, h);
        PairMasks {
            photometric,
            support,
            accepted,
        }
    }

    /// Loss at `vars` with masks decided at `vars`.
    pub fn evaluate_fresh(&self, vars: &Variables) -> Result<Evaluation> {
        let masks = self.masks(vars)?;
        self.evaluate(vars, &masks)
    }

    /// Loss at `vars` for the given masks.
    pub fn evaluate(&self, vars: &Variables, masks: &FrozenMasks) -> Result<Evaluation> {
        Ok(self.run(vars, masks, false)?.0)
    }

    /// Loss and its exact gradient for the given masks.
    pub fn evaluate_with_gradient(
        &self,
        vars: &Variables,
        masks: &FrozenMasks,
    ) -> Result<(Evaluation, Gradient)> {
        let (eval, grad) = self.run(vars, masks, true)?;
        Ok((eval, grad.expect("gradient requested")))
    }

    fn run(
        &self,
        vars: &Variables,
        masks: &FrozenMasks,
        want_grad: bool,
    ) -> Result<(Evaluation, Option<Gradient>)> {
        self.check_vars(vars)?;
        if masks.pairs.len() != self.targets.len() {
            return Err(Error::Config("masks do not match the number of targets".into()));
        }
        let outputs: Vec<PairOutput> = (0..self.targets.len())
            .into_par_iter()
            .map(|j| self.pair_terms(j, vars, &masks.pairs[j], want_grad))
            .collect();

        let (w, h) = (vars.width, vars.height);
        let depth = vars.depth_values();
        let (smooth, g_smooth) = smoothness_with_grad(&depth, &vars.valid, w, h, self.reference, want_grad);
        let (weak, g_weak) = weak_with_grad(&depth, &vars.valid, self.gt_depth, want_grad);

        let n_photo = outputs.len() as f64;
        let consist_pairs = outputs.iter().filter(|o| o.consist.is_some()).count();
        let l_photo = outputs.iter().map(|o| o.photo.value).sum::<f64>() / n_photo;
        let l_consist = if consist_pairs > 0 {
            outputs.iter().filter_map(|o| o.consist.map(|c| c.value)).sum::<f64>() / consist_pairs as f64
        } else {
            0.0
        };
        let valid_pixels = outputs.iter().map(|o| o.photo.count).sum();
        let wts = &self.weights;
        let breakdown = LossBreakdown::from_terms(wts, l_photo, smooth.value, l_consist, weak.value, valid_pixels);
        let eval = Evaluation {
            breakdown,
            photometric: outputs.iter().map(|o| o.photo).collect(),
            consistency: outputs.iter().map(|o| o.consist).collect(),
            smooth,
            weak,
        };
        if !want_grad {
            return Ok((eval, None));
        }

        let photo_scale = wts.lambda_p / n_photo;
        let consist_scale = if consist_pairs > 0 {
            wts.lambda_c / consist_pairs as f64
        } else {
            0.0
        };
        let mut inv_depth = vec![0.0; w * h];
        let mut poses = Vec::with_capacity(outputs.len());
        for out in &outputs {
            let g = out.grad.as_ref().expect("pair gradient");
            let mut pg = [0.0; 6];
            for (t, v) in pg.iter_mut().enumerate() {
                *v = photo_scale * g.pose_photo[t] + consist_scale * g.pose_consist[t];
            }
            poses.push(pg);
            for (i, v) in inv_depth.iter_mut().enumerate() {
                *v += photo_scale * g.rho_photo[i] + consist_scale * g.rho_consist[i];
            }
        }
        let (g_smooth, g_weak) = (g_smooth.expect("smooth grad"), g_weak.expect("weak grad"));
        for i in 0..w * h {
            if vars.valid[i] {
                // ∂D/∂ρ = -D²
                let d = depth[i];
                let g_d = wts.lambda_d * g_smooth[i] + wts.lambda_w * g_weak[i];
                inv_depth[i] += -d * d * g_d;
            } else {
                inv_depth[i] = 0.0;
            }
        }
        Ok((eval, Some(Gradient { poses, inv_depth })))
    }

    fn pair_terms(&self, j: usize, vars: &Variables, masks: &PairMasks, want_grad: bool) -> PairOutput {
        let k = &self.intrinsics;
        let (w, h) = (k.width, k.height);
        let n = w * h;
        let target = self.targets[j].image;
        let c = target.channels();
        let params = vars.poses[j];
        let pose = params.to_pose();
        let dr = rotation_derivatives(&params);

        // Warped target over the photometric set.
        let mut warped = vec![0.0; n * c];
        let mut cells: Vec<Option<Cell>> = vec![None; n];
        warped
            .par_chunks_mut(w * c)
            .zip(cells.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (row, cell_row))| {
                for x in 0..w {
                    let i = y * w + x;
                    if !masks.photometric[i] {
                        continue;
                    }
                    let p = PixelCoord::new(x as f64, y as f64);
                    let xt = warp_point(&k.unproject_ray(p), vars.inv_depth[i], &pose);
                    let cell = Cell::clamped(project(&xt, k), w, h);
                    for ch in 0..c {
                        row[x * c + ch] = cell.sample(target.data(), w, c, ch);
                    }
                    cell_row[x] = Some(cell);
                }
            });

        let reference = self.reference.data();
        let row_sums: Vec<(f64, usize)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut s = 0.0;
                let mut cnt = 0;
                for x in 0..w {
                    if masks.support[y * w + x] {
                        s += PixelDissimilarity::value(reference, &warped, w, h, c, x, y);
                        cnt += 1;
                    }
                }
                (s, cnt)
            })
            .collect();
        let (photo_sum, photo_count) = row_sums
            .iter()
            .fold((0.0, 0), |(s, n), (rs, rn)| (s + rs, n + rn));
        let photo = MaskedMean::from_sum(photo_sum, photo_count);

        let back = masks.accepted.as_ref().map(|_| {
            BackwardFlow::compute(
                self.targets[j].depth.expect("accepted mask implies target depth"),
                &pose,
                k,
                want_grad.then_some(&dr),
            )
        });

        let consist = masks.accepted.as_ref().map(|accepted| {
            let back = back.as_ref().expect("backward flow");
            let mut sum = 0.0;
            let mut cnt = 0;
            for y in 0..h {
                let mut row = 0.0;
                for x in 0..w {
                    let i = y * w + x;
                    if !accepted[i] {
                        continue;
                    }
                    let p = PixelCoord::new(x as f64, y as f64);
                    let p_t = project(&warp_point(&k.unproject_ray(p), vars.inv_depth[i], &pose), k);
                    let cell = Cell::clamped(p_t, w, h);
                    let d = DeltaFlow::at(p, p_t, back, &cell);
                    row += d.0.abs() + d.1.abs();
                    cnt += 1;
                }
                sum += row;
            }
            MaskedMean::from_sum(sum, cnt)
        });

        if !want_grad {
            return PairOutput {
                photo,
                consist,
                grad: None,
            };
        }

        // Adjoint of the photometric mean with respect to the warped values.
        let mut g_warped = vec![0.0; n * c];
        if photo_count > 0 {
            let scale = 1.0 / photo_count as f64;
            for y in 0..h {
                for x in 0..w {
                    if masks.support[y * w + x] {
                        PixelDissimilarity::accumulate_grad(
                            reference, &warped, w, h, c, x, y, scale, &mut g_warped,
                        );
                    }
                }
            }
        }

        let rows: Vec<([f64; 6], Vec<f64>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut pose_g = [0.0; 6];
                let mut rho_g = vec![0.0; w];
                for x in 0..w {
                    let i = y * w + x;
                    let Some(cell) = cells[i] else { continue };
                    let gw = &g_warped[i * c..(i + 1) * c];
                    if gw.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let (mut gx, mut gy) = (0.0, 0.0);
                    for (ch, g) in gw.iter().enumerate() {
                        let (dx, dy) = cell.gradient(target.data(), w, c, ch);
                        gx += g * dx;
                        gy += g * dy;
                    }
                    let p = PixelCoord::new(x as f64, y as f64);
                    let jet = warp_jet(&k.unproject_ray(p), vars.inv_depth[i], &pose, &dr, k);
                    for t in 0..6 {
                        pose_g[t] += gx * jet.d_pose[0][t] + gy * jet.d_pose[1][t];
                    }
                    rho_g[x] = gx * jet.d_rho[0] + gy * jet.d_rho[1];
                }
                (pose_g, rho_g)
            })
            .collect();
        let mut pose_photo = [0.0; 6];
        let mut rho_photo = Vec::with_capacity(n);
        for (pg, rg) in rows {
            for t in 0..6 {
                pose_photo[t] += pg[t];
            }
            rho_photo.extend(rg);
        }

        let mut pose_consist = [0.0; 6];
        let mut rho_consist = vec![0.0; n];
        if let (Some(accepted), Some(back), Some(cm)) = (masks.accepted.as_ref(), back.as_ref(), consist) {
            if cm.count > 0 {
                let scale = 1.0 / cm.count as f64;
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        if !accepted[i] {
                            continue;
                        }
                        let p = PixelCoord::new(x as f64, y as f64);
                        let jet = warp_jet(&k.unproject_ray(p), vars.inv_depth[i], &pose, &dr, k);
                        let cell = Cell::clamped(jet.p_t, w, h);
                        let d = DeltaFlow::at(p, jet.p_t, back, &cell);
                        let (sx, sy) = (sign0(d.0) * scale, sign0(d.1) * scale);
                        let jb = back.spatial_jacobian(&cell);
                        // sᵀ (∂Δf/∂p_t) with ∂Δf/∂p_t = J_b - I
                        let vx = sx * (jb[0][0] - 1.0) + sy * jb[1][0];
                        let vy = sx * jb[0][1] + sy * (jb[1][1] - 1.0);
                        let db = back.sample_derivs(&cell);
                        for t in 0..6 {
                            pose_consist[t] += vx * jet.d_pose[0][t]
                                + vy * jet.d_pose[1][t]
                                + sx * db[t]
                                + sy * db[6 + t];
                        }
                        rho_consist[i] = vx * jet.d_rho[0] + vy * jet.d_rho[1];
                    }
                }
            }
        }

        PairOutput {
            photo,
            consist,
            grad: Some(PairGrad {
                pose_photo,
                pose_consist,
                rho_photo,
                rho_consist,
            }),
        }
    }
}

#[inline]
fn sign0(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}
