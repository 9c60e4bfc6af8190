use std::fmt::Write as _;
use std::path::Path;

use ::image::{DynamicImage, ImageFormat, Luma, Rgb};

use super::{write_atomic, write_text_atomic, KeyValues};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseParams, PoseSE3};
use crate::image::{DepthMap, ImageBuffer};
use crate::optimizer::IterationRecord;
use crate::losses::LossBreakdown;

fn encode_png(path: &Path, image: DynamicImage) -> Result<()> {
    write_atomic(path, |f| {
        image
            .write_to(f, ImageFormat::Png)
            .map_err(|e| Error::load(path, e.to_string()))
    })
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ::image::open(path).map_err(|e| Error::load(path, e.to_string()))
}

/// Writes an 8-bit PNG (RGB or gray, following the channel count).
pub fn write_rgb_png(path: &Path, image: &ImageBuffer) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let bytes: Vec<u8> = image.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let dynamic = if image.channels() == 3 {
        DynamicImage::ImageRgb8(::image::ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("sized"))
    } else {
        DynamicImage::ImageLuma8(::image::ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("sized"))
    };
    encode_png(path, dynamic)
}

/// Reads an 8-bit image as 3-channel values in `[0, 1]`.
pub fn read_rgb_png(path: &Path) -> Result<ImageBuffer> {
    let img = decode(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    ImageBuffer::new(w, h, 3, data)
}

/// Writes depth as 16-bit millimeters, `0` marking invalid pixels.
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut mm = Vec::with_capacity(depth.len());
    for (d, ok) in depth.values.iter().zip(&depth.valid) {
        if !ok {
            mm.push(0u16);
            continue;
        }
        let v = (d * 1000.0).round();
        if !(1.0..=65535.0).contains(&v) {
            return Err(Error::load(path, format!("depth {d} m does not fit 16-bit millimeters")));
        }
        mm.push(v as u16);
    }
    let buf = ::image::ImageBuffer::<Luma<u16>, _>::from_raw(depth.width as u32, depth.height as u32, mm)
        .expect("sized");
    encode_png(path, DynamicImage::ImageLuma16(buf))
}

/// Reads a 16-bit millimeter depth PNG.
pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let DynamicImage::ImageLuma16(buf) = decode(path)? else {
        return Err(Error::load(path, "depth images must be 16-bit single-channel PNGs"));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let raw = buf.into_raw();
    let values = raw.iter().map(|v| *v as f64 / 1000.0).collect();
    let valid = raw.iter().map(|v| *v != 0).collect();
    DepthMap::new(w, h, values, valid)
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    let text = format!(
        "fx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    write_text_atomic(path, &text)
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let kv = KeyValues::read(path)?;
    let k = Intrinsics::new(
        kv.require("fx")?,
        kv.require("fy")?,
        kv.require("cx")?,
        kv.require("cy")?,
        kv.require("width")?,
        kv.require("height")?,
    )
    .map_err(|e| Error::load(path, e.to_string()))?;
    kv.finish()?;
    Ok(k)
}

/// Pose of frame `index` relative to the trajectory's reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub pose: PoseParams,
}

/// Records sharing one reference frame. Each pose maps reference camera
/// points into frame `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub reference: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn get(&self, index: usize) -> Option<&TrajectoryRecord> {
        self.records.iter().find(|r| r.index == index)
    }

    /// Pose from frame `from` to frame `to`, composed through the reference.
    pub fn relative(&self, from: usize, to: usize) -> Option<PoseSE3> {
        let pose_of = |i: usize| {
            if i == self.reference {
                Some(PoseSE3::identity())
            } else {
                self.get(i).map(|r| r.pose.to_pose())
            }
        };
        Some(pose_of(to)?.compose(&pose_of(from)?.inverse()))
    }
}

/// Writes `# reference=<idx>` followed by `index tx ty tz rx ry rz` lines.
pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut text = format!("# reference={}\n# index tx ty tz rx ry rz\n", trajectory.reference);
    for r in &trajectory.records {
        let p = r.pose;
        writeln!(text, "{} {} {} {} {} {} {}", r.index, p.tx, p.ty, p.tz, p.rx, p.ry, p.rz).expect("string");
    }
    write_text_atomic(path, &text)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut reference = None;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("reference=") {
                let idx = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::load(path, format!("line {}: bad reference index", n + 1)))?;
                reference = Some(idx);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::load(path, format!("line {}: expected 'index tx ty tz rx ry rz'", n + 1));
        if fields.len() != 7 {
            return Err(bad());
        }
        let index = fields[0].parse().map_err(|_| bad())?;
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let pose = PoseParams::from_slice(&values);
        if !pose.is_finite() {
            return Err(bad());
        }
        records.push(TrajectoryRecord { index, pose });
    }
    let reference = reference.ok_or_else(|| Error::load(path, "missing '# reference=<index>' header"))?;
    Ok(Trajectory { reference, records })
}

/// Reads camera-to-world poses, one `tx ty tz rx ry rz` line per frame.
pub fn read_camera_path(path: &Path) -> Result<Vec<PoseSE3>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .ok()
            .filter(|v| v.len() == 6 && v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::load(path, format!("line {}: expected 'tx ty tz rx ry rz'", n + 1)))?;
        poses.push(PoseParams::from_slice(&values).to_pose());
    }
    if poses.is_empty() {
        return Err(Error::load(path, "no camera poses"));
    }
    Ok(poses)
}

/// Loss history as CSV; `iter` counts history rows from 0.
pub fn write_loss_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut text = String::from(LossBreakdown::CSV_HEADER);
    text.push('\n');
    for (i, r) in history.iter().enumerate() {
        text.push_str(&r.breakdown.csv_row(i));
        text.push('\n');
    }
    write_text_atomic(path, &text)
}
