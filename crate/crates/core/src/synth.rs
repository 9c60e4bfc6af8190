//! Ray-cast renderer for a textured rectangular room.
//!
//! The room is the box `[0, sx] x [0, sy] x [0, sz]` in world coordinates.
//! Camera poses are camera-to-world transforms; the camera looks along its
//! own `+z` axis with `+y` pointing down. Each of the six walls carries a
//! procedural texture: a fine lattice of value noise with an alternating
//! checker sign, blended with a coarser noise layer, both bilinearly
//! interpolated. The checker guarantees local contrast everywhere.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project_unchecked, Intrinsics, PixelCoord, PoseParams, PoseSE3};
use crate::image::{DepthMap, ImageBuffer};
use crate::io::KeyValues;
use crate::optimizer::SequenceState;

const COARSE_FACTOR: f64 = 5.0;
const FINE_WEIGHT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
struct Lattice {
    nu: usize,
    nv: usize,
    values: Vec<[f64; 3]>,
}

impl Lattice {
    fn random(extent: (f64, f64), spacing: f64, checker: bool, rng: &mut ChaCha8Rng) -> Self {
        let nu = (extent.0 / spacing).ceil() as usize + 2;
        let nv = (extent.1 / spacing).ceil() as usize + 2;
        let mut values = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                let mut node = [0.0; 3];
                for v in node.iter_mut() {
                    let r: f64 = rng.random();
                    *v = if checker {
                        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                        0.5 + sign * (0.1 + 0.25 * r)
                    } else {
                        r
                    };
                }
                values.push(node);
            }
        }
        Self { nu, nv, values }
    }

    fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let x = u.clamp(0.0, (self.nu - 1) as f64);
        let y = v.clamp(0.0, (self.nv - 1) as f64);
        let x0 = (x.floor() as usize).min(self.nu - 2);
        let y0 = (y.floor() as usize).min(self.nv - 2);
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let at = |i: usize, j: usize| &self.values[j * self.nu + i];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let top = (1.0 - ax) * at(x0, y0)[c] + ax * at(x0 + 1, y0)[c];
            let bottom = (1.0 - ax) * at(x0, y0 + 1)[c] + ax * at(x0 + 1, y0 + 1)[c];
            *o = (1.0 - ay) * top + ay * bottom;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
struct WallTexture {
    fine: Lattice,
    coarse: Lattice,
}

/// Wall appearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Seeded procedural texture with fine lattice spacing `scale` meters.
    Procedural { seed: u64, scale: f64 },
    /// Uniform mid-gray walls.
    Textureless,
}

/// An axis-aligned textured room and the camera that observes it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxScene {
    pub size: Vector3<f64>,
    pub intrinsics: Intrinsics,
    pub texture: Texture,
    walls: Vec<WallTexture>,
}

/// Result of casting one ray into the room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals the camera-frame z-depth for rays with unit z.
    pub t: f64,
    pub point: Vector3<f64>,
    /// `2 * axis + side`, with side 1 for the wall at the far coordinate.
    pub wall: usize,
}

fn wall_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl BoxScene {
    pub fn new(size: Vector3<f64>, intrinsics: Intrinsics, texture: Texture) -> Result<Self> {
        if !size.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config(format!("room dimensions must be positive, got {size:?}")));
        }
        let walls = match texture {
            Texture::Procedural { seed, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Config(format!("texture scale must be positive, got {scale}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..6)
                    .map(|wall| {
                        let (a, b) = wall_axes(wall / 2);
                        let extent = (size[a], size[b]);
                        WallTexture {
                            fine: Lattice::random(extent, scale, true, &mut rng),
                            coarse: Lattice::random(extent, scale * COARSE_FACTOR, false, &mut rng),
                        }
                    })
                    .collect()
            }
            Texture::Textureless => Vec::new(),
        };
        Ok(Self {
            size,
            intrinsics,
            texture,
            walls,
        })
    }

    /// Scene from a `key = value` spec: `size_x`, `size_y`, `size_z`
    /// (meters), `seed`, `texture_scale`, `textureless`, and optionally the
    /// camera `width`, `height`, `fx`, `fy`, `cx`, `cy`.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let size = Vector3::new(
            kv.get_or("size_x", 5.0)?,
            kv.get_or("size_y", 3.0)?,
            kv.get_or("size_z", 6.0)?,
        );
        let width = kv.get_or("width", 256usize)?;
        let height = kv.get_or("height", 144usize)?;
        let intrinsics = Intrinsics::new(
            kv.get_or("fx", 200.0 * width as f64 / 256.0)?,
            kv.get_or("fy", 200.0 * width as f64 / 256.0)?,
            kv.get_or("cx", (width as f64 - 1.0) / 2.0)?,
            kv.get_or("cy", (height as f64 - 1.0) / 2.0)?,
            width,
            height,
        )?;
        let texture = if kv.get_or("textureless", false)? {
            Texture::Textureless
        } else {
            Texture::Procedural {
                seed: kv.get_or("seed", 0u64)?,
                scale: kv.get_or("texture_scale", 0.05)?,
            }
        };
        Self::new(size, intrinsics, texture)
    }

    /// The room center.
    pub fn center(&self) -> Vector3<f64> {
        self.size * 0.5
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] > 0.0 && p[a] < self.size[a])
    }

    /// First wall hit by the ray `origin + t * dir`, `t > 0`, for an origin
    /// inside the room.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<(f64, usize)> = None;
        for axis in 0..3 {
            let d = dir[axis];
            if d == 0.0 {
                continue;
            }
            let (bound, side) = if d > 0.0 { (self.size[axis], 1) } else { (0.0, 0) };
            let t = (bound - origin[axis]) / d;
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, 2 * axis + side));
            }
        }
        let (t, wall) = best?;
        let mut point = origin + dir * t;
        // Snap the hit coordinate onto its wall exactly.
        point[wall / 2] = if wall % 2 == 1 { self.size[wall / 2] } else { 0.0 };
        Some(Hit { t, point, wall })
    }

    /// Color of a point on `wall`.
    pub fn shade(&self, wall: usize, point: &Vector3<f64>) -> [f64; 3] {
        let Texture::Procedural { scale, .. } = self.texture else {
            return [0.5; 3];
        };
        let (a, b) = wall_axes(wall / 2);
        let tex = &self.walls[wall];
        let f = tex.fine.sample(point[a] / scale, point[b] / scale);
        let c = tex
            .coarse
            .sample(point[a] / (scale * COARSE_FACTOR), point[b] / (scale * COARSE_FACTOR));
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = (FINE_WEIGHT * f[i] + (1.0 - FINE_WEIGHT) * c[i]).clamp(0.0, 1.0);
        }
        out
    }

    fn check_camera(&self, camera: &PoseSE3) -> Result<()> {
        if !camera.is_rigid(1e-9) || !camera.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("camera pose is not a rigid transform".into()));
        }
        if !self.contains(&camera.translation) {
            return Err(Error::Config(format!(
                "camera at {:?} is outside the room {:?}",
                camera.translation.as_slice(),
                self.size.as_slice()
            )));
        }
        Ok(())
    }

    /// Ray through pixel `p` of a camera at `camera` (camera-to-world), in
    /// world coordinates, scaled so its camera-frame z component is 1.
    fn pixel_ray(&self, camera: &PoseSE3, p: PixelCoord) -> Vector3<f64> {
        camera.rotation * self.intrinsics.unproject_ray(p)
    }

    /// Where the surface seen through pixel `p` of camera `a` projects in
    /// camera `b`, found by intersecting the pixel ray with the walls.
    pub fn correspondence(&self, a: &PoseSE3, b: &PoseSE3, p: PixelCoord) -> Result<Option<PixelCoord>> {
        self.check_camera(a)?;
        self.check_camera(b)?;
        let Some(hit) = self.cast(&a.translation, &self.pixel_ray(a, p)) else {
            return Ok(None);
        };
        let local = b.rotation.transpose() * (hit.point - b.translation);
        if local.z <= 0.0 {
            return Ok(None);
        }
        Ok(Some(project_unchecked(&local, &self.intrinsics)))
    }
}

/// Renders color and z-depth seen from `camera` (camera-to-world).
pub fn render(scene: &BoxScene, camera: &PoseSE3) -> Result<(ImageBuffer, DepthMap)> {
    scene.check_camera(camera)?;
    let k = &scene.intrinsics;
    let (w, h) = (k.width, k.height);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut color = Vec::with_capacity(w * 3);
            let mut depth = Vec::with_capacity(w);
            for x in 0..w {
                let dir = scene.pixel_ray(camera, PixelCoord::new(x as f64, y as f64));
                let hit = scene
                    .cast(&camera.translation, &dir)
                    .expect("a ray from inside a closed room always hits a wall");
                color.extend(scene.shade(hit.wall, &hit.point));
                depth.push(hit.t);
            }
            (color, depth)
        })
        .collect();
    let mut color = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    for (c, d) in rows {
        color.extend(c);
        depth.extend(d);
    }
    Ok((ImageBuffer::new(w, h, 3, color)?, DepthMap::from_values(w, h, depth)?))
}

/// Pose taking points from the `reference` camera frame into the `target`
/// camera frame, given both camera-to-world poses.
pub fn relative_pose(reference: &PoseSE3, target: &PoseSE3) -> PoseSE3 {
    target.inverse().compose(reference)
}

/// Camera-to-world pose at `position` with Euler angles `(rx, ry, rz)`.
pub fn camera_at(position: Vector3<f64>, rx: f64, ry: f64, rz: f64) -> PoseSE3 {
    PoseParams::new(position.x, position.y, position.z, rx, ry, rz).to_pose()
}

/// A rendered sequence with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    /// Frames, degraded depth, clean depth as `gt_depths`, ground-truth
    /// relative poses, and identity initial poses.
    pub state: SequenceState,
    /// Camera-to-world poses of every frame.
    pub cameras: Vec<PoseSE3>,
}

/// Renders every camera of `trajectory` and degrades the depth maps with
/// zero-mean Gaussian noise of standard deviation `noise` (meters) and
/// exactly `round(holes * pixels)` invalid pixels per frame.
pub fn make_sequence(
    scene: &BoxScene,
    trajectory: &[PoseSE3],
    noise: f64,
    holes: f64,
    seed: u64,
) -> Result<SyntheticSequence> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("depth noise must be non-negative, got {noise}")));
    }
    if !(0.0..=1.0).contains(&holes) {
        return Err(Error::Config(format!("hole fraction must be within [0, 1], got {holes}")));
    }
    let rendered = trajectory
        .iter()
        .map(|cam| render(scene, cam))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(rendered.len());
    let mut depths = Vec::with_capacity(rendered.len());
    let mut gt_depths = Vec::with_capacity(rendered.len());
    for (image, clean) in rendered {
        let n = clean.len();
        let mut noisy = clean.clone();
        if noise > 0.0 {
            for v in noisy.values.iter_mut() {
                *v = (*v + normal.sample(&mut rng)).max(1e-3);
            }
        }
        let count = (holes * n as f64).round() as usize;
        for i in sample(&mut rng, n, count) {
            noisy.valid[i] = false;
            noisy.values[i] = 0.0;
        }
        frames.push(image);
        depths.push(Some(noisy));
        gt_depths.push(Some(clean));
    }
    let mut state = SequenceState::new(frames, depths, scene.intrinsics)?;
    state.gt_depths = gt_depths;
    let reference = &trajectory[state.reference_index()];
    state.gt_poses = Some(
        state
            .target_indices()
            .into_iter()
            .map(|t| PoseParams::from_pose(&relative_pose(reference, &trajectory[t])))
            .collect(),
    );
    Ok(SyntheticSequence {
        state,
        cameras: trajectory.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> BoxScene {
        let k = Intrinsics::new(40.0, 40.0, 31.5, 23.5, 64, 48).unwrap();
        BoxScene::new(Vector3::new(4.0, 3.0, 5.0), k, Texture::Procedural { seed: 3, scale: 0.1 }).unwrap()
    }

    #[test]
    fn principal_ray_depth_is_wall_distance() {
        let s = scene();
        let k = Intrinsics::new(40.0, 40.0, 32.0, 24.0, 65, 49).unwrap();
        let s = BoxScene::new(s.size, k, s.texture).unwrap();
        let cam = camera_at(s.center(), 0.0, 0.0, 0.0);
        let (_, depth) = render(&s, &cam).unwrap();
        assert_eq!(depth.get(32, 24), Some(2.5));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = scene();
        let cam = camera_at(Vector3::new(1.5, 1.2, 2.0), 0.1, -0.3, 0.05);
        let a = render(&s, &cam).unwrap();
        let b = render(&scene(), &cam).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_lies_on_walls() {
        let s = scene();
        let cam = camera_at(Vector3::new(1.0, 2.0, 1.5), 0.2, 0.7, -0.1);
        let (_, depth) = render(&s, &cam).unwrap();
        let k = s.intrinsics;
        for y in 0..k.height {
            for x in 0..k.width {
                let d = depth.get(x, y).unwrap();
                let p = cam.transform_point(&(k.unproject_ray(PixelCoord::new(x as f64, y as f64)) * d));
                let off = (0..3)
                    .map(|a| p[a].abs().min((p[a] - s.size[a]).abs()))
                    .fold(f64::INFINITY, f64::min);
                assert!(off < 1e-9, "pixel ({x},{y}) is {off} m off the walls");
            }
        }
    }

    #[test]
    fn camera_outside_is_rejected() {
        let s = scene();
        let cam = camera_at(Vector3::new(-1.0, 1.0, 1.0), 0.0, 0.0, 0.0);
        assert!(matches!(render(&s, &cam), Err(Error::Config(_))));
    }

    #[test]
    fn holes_and_noise() {
        let s = scene();
        let traj = vec![
            camera_at(s.center(), 0.0, 0.0, 0.0),
            camera_at(s.center() + Vector3::new(0.1, 0.0, 0.0), 0.0, 0.05, 0.0),
        ];
        let clean = make_sequence(&s, &traj, 0.0, 0.0, 1).unwrap();
        for (d, g) in clean.state.depths.iter().zip(&clean.state.gt_depths) {
            assert_eq!(d, g);
        }
        let holed = make_sequence(&s, &traj, 0.0, 0.25, 1).unwrap();
        let d = holed.state.depths[0].as_ref().unwrap();
        let frac = d.valid_count() as f64 / d.len() as f64;
        assert!((frac - 0.75).abs() <= 0.01);
    }
}
