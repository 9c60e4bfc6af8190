//! Pinhole camera model, rigid poses and the per-pixel warping geometry.
//!
//! Pixel coordinates follow the convention that `(0, 0)` is the center of the
//! top-left pixel, `x` runs along columns and `y` along rows. Camera frames are
//! right-handed with `x` right, `y` down and `z` along the optical axis.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::image::{DepthMap, FlowField};

/// Transformed points with `z` at or below this value are treated as invalid.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole intrinsics for an image of a given resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::Config(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Config("principal point must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image size must be non-zero ({width}x{height})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// The upper-triangular camera matrix `K`.
    pub fn as_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Multiplies all four parameters (and the resolution) by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: ((self.width as f64) * s).round().max(1.0) as usize,
            height: ((self.height as f64) * s).round().max(1.0) as usize,
        }
    }

    /// Intrinsics of the same camera after resampling the image to
    /// `width x height`, keeping pixel centers at integer coordinates.
    pub fn resized_to(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }

    /// Ray direction `K^-1 p` (with unit `z`) through pixel `p`.
    #[inline]
    pub fn unproject_ray(&self, p: PixelCoord) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// A continuous image-plane location in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Rigid transform `x' = R x + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Homogeneous 4x4 form `[R | T; 0 0 0 1]`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Whether `R` is orthonormal with unit determinant within `tol`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let should_be_identity = self.rotation * self.rotation.transpose();
        (should_be_identity - Matrix3::identity()).amax() <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Rotation angle of `R` in radians.
    pub fn rotation_angle(&self) -> f64 {
        // atan2 keeps full precision for small angles, unlike acos alone.
        let r = &self.rotation;
        let s = 0.5
            * (r[(2, 1)] - r[(1, 2)])
                .hypot(r[(0, 2)] - r[(2, 0)])
                .hypot(r[(1, 0)] - r[(0, 1)]);
        let c = (r.trace() - 1.0) * 0.5;
        s.atan2(c)
    }
}

/// Six-parameter pose: translation in meters and `R = Rz(rz) Ry(ry) Rx(rx)`.
///
/// The Euler parametrization is singular at `|ry| = π/2`; inter-frame motion
/// is expected to stay far from it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseParams {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl PoseParams {
    pub const fn new(tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            rx,
            ry,
            rz,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3], s[4], s[5])
    }

    pub fn to_pose(&self) -> PoseSE3 {
        euler_to_pose(self)
    }

    /// Recovers Euler parameters from a rigid transform (`|ry| < π/2`).
    pub fn from_pose(pose: &PoseSE3) -> Self {
        let r = &pose.rotation;
        let ry = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let rx = r[(2, 1)].atan2(r[(2, 2)]);
        let rz = r[(1, 0)].atan2(r[(0, 0)]);
        Self::new(
            pose.translation.x,
            pose.translation.y,
            pose.translation.z,
            rx,
            ry,
            rz,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn drot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

pub fn euler_to_pose(params: &PoseParams) -> PoseSE3 {
    PoseSE3 {
        rotation: rot_z(params.rz) * rot_y(params.ry) * rot_x(params.rx),
        translation: Vector3::new(params.tx, params.ty, params.tz),
    }
}

/// Partial derivatives of `Rz Ry Rx` with respect to `rx`, `ry` and `rz`.
pub fn rotation_derivatives(params: &PoseParams) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(params.rx), rot_y(params.ry), rot_z(params.rz));
    [
        rz * ry * drot_x(params.rx),
        rz * drot_y(params.ry) * rx,
        drot_z(params.rz) * ry * rx,
    ]
}

/// Lifts pixel `p` at z-depth `depth` to a camera-frame point.
pub fn backproject(p: PixelCoord, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    Ok(k.unproject_ray(p) * depth)
}

/// Projects a camera-frame point, returning the pixel and its z-depth.
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<(PixelCoord, f64)> {
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera { z: point.z });
    }
    Ok((project_unchecked(point, k), point.z))
}

#[inline]
pub(crate) fn project_unchecked(point: &Vector3<f64>, k: &Intrinsics) -> PixelCoord {
    let inv_z = 1.0 / point.z;
    PixelCoord::new(
        k.fx * point.x * inv_z + k.cx,
        k.fy * point.y * inv_z + k.cy,
    )
}

/// Maps reference pixel `p_r` with depth `depth_r` into the camera described by
/// `pose` (reference frame to target frame), i.e. `p_t ~ K (D R K^-1 p_r + T)`.
///
/// Returns `None` when the transformed point lies at or behind the target
/// camera plane, or when `depth_r` is not positive.
#[inline]
pub fn warp_coord(
    p_r: PixelCoord,
    depth_r: f64,
    pose: &PoseSE3,
    k: &Intrinsics,
) -> Option<(PixelCoord, f64)> {
    if !(depth_r > 0.0) {
        return None;
    }
    let x = pose.transform_point(&(k.unproject_ray(p_r) * depth_r));
    if x.z <= MIN_DEPTH {
        return None;
    }
    Some((project_unchecked(&x, k), x.z))
}

/// Per-pixel rigid flow `p_r - p_t` induced by `pose` on the reference depth.
pub fn rigid_flow(depth_r: &DepthMap, pose: &PoseSE3, k: &Intrinsics) -> Result<FlowField> {
    depth_r.check_dims(k.width, k.height)?;
    let (w, h) = (k.width, k.height);
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !depth_r.valid[i] {
                continue;
            }
            let p = PixelCoord::new(x as f64, y as f64);
            if let Some((pt, _)) = warp_coord(p, depth_r.values[i], pose, k) {
                if k.contains(pt) {
                    flow.du[i] = p.x - pt.x;
                    flow.dv[i] = p.y - pt.y;
                    flow.mask[i] = true;
                }
            }
        }
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, -1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 4).is_err());
        let m = k().as_matrix();
        assert_eq!(m[(0, 0)], 100.0);
        assert_eq!(m[(0, 2)], 50.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(k().scaled(1.0), k());
    }

    #[test]
    fn resized_keeps_pixel_centers() {
        let k = Intrinsics::new(200.0, 200.0, 127.5, 71.5, 256, 144).unwrap();
        let half = k.resized_to(128, 72);
        assert_abs_diff_eq!(half.fx, 100.0);
        assert_abs_diff_eq!(half.cx, 63.5);
        assert_abs_diff_eq!(half.cy, 35.5);
    }

    #[test]
    fn euler_examples() {
        let p = euler_to_pose(&PoseParams::zero());
        assert_eq!(p, PoseSE3::identity());

        let p = euler_to_pose(&PoseParams::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(p.rotation, Matrix3::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 0.0, 0.0));

        // Rz(π/2) written out by hand.
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let p = euler_to_pose(&PoseParams::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2));
        assert!((p.rotation - expected).amax() < 1e-15);
        let x_axis = p.rotation * Vector3::x();
        assert_abs_diff_eq!(x_axis, Vector3::y(), epsilon = 1e-15);
        assert_eq!(p.translation, Vector3::zeros());
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        let params = PoseParams::new(0.0, 0.0, 0.0, 0.3, -0.2, 0.7);
        let d = rotation_derivatives(&params);
        let h = 1e-6;
        for axis in 0..3 {
            let mut plus = params.to_array();
            let mut minus = params.to_array();
            plus[3 + axis] += h;
            minus[3 + axis] -= h;
            let fd = (PoseParams::from_array(plus).to_pose().rotation
                - PoseParams::from_array(minus).to_pose().rotation)
                / (2.0 * h);
            assert!((fd - d[axis]).amax() < 1e-9, "axis {axis}");
        }
    }

    #[test]
    fn backproject_and_project_examples() {
        let k = k();
        assert_eq!(
            backproject(PixelCoord::new(50.0, 50.0), 2.0, &k).unwrap(),
            Vector3::new(0.0, 0.0, 2.0)
        );
        assert_eq!(
            backproject(PixelCoord::new(150.0, 50.0), 1.0, &k).unwrap(),
            Vector3::new(1.0, 0.0, 1.0)
        );
        assert!(matches!(
            backproject(PixelCoord::new(0.0, 0.0), 0.0, &k),
            Err(Error::Domain(_))
        ));

        let (p, d) = project(&Vector3::new(0.0, 0.0, 5.0), &k).unwrap();
        assert_eq!((p, d), (PixelCoord::new(50.0, 50.0), 5.0));
        let (p, d) = project(&Vector3::new(1.0, 0.0, 1.0), &k).unwrap();
        assert_eq!((p, d), (PixelCoord::new(150.0, 50.0), 1.0));
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn warp_examples() {
        let k = k();
        let p = PixelCoord::new(12.25, 70.5);
        let (q, d) = warp_coord(p, 3.0, &PoseSE3::identity(), &k).unwrap();
        assert_abs_diff_eq!(q.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, p.y, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);

        let t = 0.2;
        let pose = PoseParams::new(t, 0.0, 0.0, 0.0, 0.0, 0.0).to_pose();
        let (q, _) = warp_coord(p, 3.0, &pose, &k).unwrap();
        assert_abs_diff_eq!(q.x, p.x + k.fx * t / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, p.y, epsilon = 1e-12);

        let spin = PoseParams::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.4).to_pose();
        let c = PixelCoord::new(k.cx, k.cy);
        let (q, _) = warp_coord(c, 2.0, &spin, &k).unwrap();
        assert_abs_diff_eq!(q.x, c.x, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, c.y, epsilon = 1e-12);

        let backwards = PoseParams::new(0.0, 0.0, -5.0, 0.0, 0.0, 0.0).to_pose();
        assert!(warp_coord(c, 2.0, &backwards, &k).is_none());
    }

    #[test]
    fn rigid_flow_examples() {
        let k = Intrinsics::new(40.0, 40.0, 9.5, 7.5, 20, 16).unwrap();
        let mut depth = DepthMap::constant(20, 16, 2.0);
        let flow = rigid_flow(&depth, &PoseSE3::identity(), &k).unwrap();
        assert!(flow.mask.iter().all(|&m| m));
        assert!(flow.du.iter().chain(&flow.dv).all(|&v| v.abs() < 1e-12));

        let t = 0.05;
        let pose = PoseParams::new(t, 0.0, 0.0, 0.0, 0.0, 0.0).to_pose();
        let flow = rigid_flow(&depth, &pose, &k).unwrap();
        let expected = -k.fx * t / 2.0;
        for i in 0..flow.du.len() {
            if flow.mask[i] {
                assert_abs_diff_eq!(flow.du[i], expected, epsilon = 1e-12);
                assert_abs_diff_eq!(flow.dv[i], 0.0, epsilon = 1e-12);
            }
        }
        // The last column moves past the right border.
        assert!(!flow.mask[19]);

        let hole = [3 * 20 + 4, 3 * 20 + 5, 9 * 20 + 11];
        for &i in &hole {
            depth.valid[i] = false;
        }
        let flow = rigid_flow(&depth, &PoseSE3::identity(), &k).unwrap();
        for i in 0..flow.mask.len() {
            assert_eq!(flow.mask[i], !hole.contains(&i));
        }

        let wrong = Intrinsics::new(40.0, 40.0, 9.5, 7.5, 21, 16).unwrap();
        assert!(matches!(
            rigid_flow(&depth, &pose, &wrong),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pose_inverse_and_params_round_trip() {
        let params = PoseParams::new(0.3, -1.2, 0.7, 0.4, -1.1, 2.9);
        let pose = params.to_pose();
        assert!(pose.is_rigid(1e-12));
        let id = pose.inverse().compose(&pose);
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation.amax() < 1e-12);
        let back = PoseParams::from_pose(&pose);
        for (a, b) in back.to_array().iter().zip(params.to_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}
