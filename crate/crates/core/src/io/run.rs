use std::path::Path;

use super::KeyValues;
use crate::error::Result;
use crate::losses::LossWeights;
use crate::optimizer::{AdamConfig, PyramidConfig};

/// Settings of a solve, read from a `key = value` file.
///
/// Keys: `lambda_p`, `lambda_d`, `lambda_c`, `lambda_w`; `lr`, `beta1`,
/// `beta2`, `epsilon`, `max_iters`, `tolerance`, `line_guard`, `lr_floor`,
/// `lr_growth` for pose estimation; `depth_lr`, `depth_max_iters` for depth refinement
/// (other Adam settings are shared); `pyramid_levels`; `frames`, `start`;
/// working resolution `width`, `height`; `init_depth` (meters) to start
/// depth refinement from a fronto-parallel plane instead of measured depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub weights: LossWeights,
    pub pose_adam: AdamConfig,
    pub depth_adam: AdamConfig,
    pub pyramid: PyramidConfig,
    /// Frames per window, the middle one being the reference.
    pub frames: usize,
    pub start: usize,
    pub width: usize,
    pub height: usize,
    pub init_depth: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            pose_adam: AdamConfig::default(),
            depth_adam: AdamConfig::default(),
            pyramid: PyramidConfig::default(),
            frames: 5,
            start: 0,
            width: 256,
            height: 144,
            init_depth: None,
        }
    }
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let weights = LossWeights::new(
            kv.get_or("lambda_p", d.weights.lambda_p)?,
            kv.get_or("lambda_d", d.weights.lambda_d)?,
            kv.get_or("lambda_c", d.weights.lambda_c)?,
            kv.get_or("lambda_w", d.weights.lambda_w)?,
        )?;
        let a = d.pose_adam;
        let pose_adam = AdamConfig {
            lr: kv.get_or("lr", a.lr)?,
            beta1: kv.get_or("beta1", a.beta1)?,
            beta2: kv.get_or("beta2", a.beta2)?,
            epsilon: kv.get_or("epsilon", a.epsilon)?,
            max_iters: kv.get_or("max_iters", a.max_iters)?,
            tolerance: kv.get_or("tolerance", a.tolerance)?,
            line_guard: kv.get_or("line_guard", a.line_guard)?,
            lr_floor: kv.get_or("lr_floor", a.lr_floor)?,
            lr_growth: kv.get_or("lr_growth", a.lr_growth)?,
        };
        pose_adam.validate()?;
        let depth_adam = AdamConfig {
            lr: kv.get_or("depth_lr", pose_adam.lr)?,
            max_iters: kv.get_or("depth_max_iters", pose_adam.max_iters)?,
            ..pose_adam
        };
        depth_adam.validate()?;
        let pyramid = PyramidConfig {
            levels: kv.get_or("pyramid_levels", d.pyramid.levels)?,
        };
        pyramid.validate()?;
        let cfg = Self {
            weights,
            pose_adam,
            depth_adam,
            pyramid,
            frames: kv.get_or("frames", d.frames)?,
            start: kv.get_or("start", d.start)?,
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            init_depth: kv.get("init_depth")?,
        };
        kv.finish()?;
        if cfg.frames < 2 {
            return Err(crate::Error::Config(format!("frames must be at least 2, got {}", cfg.frames)));
        }
        if let Some(d) = cfg.init_depth {
            if !(d > 0.0 && d.is_finite()) {
                return Err(crate::Error::Config(format!("init_depth must be positive, got {d}")));
            }
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::from_kv(&KeyValues::parse("", "c").unwrap()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pose_adam.lr, 0.0002);
        let kv = KeyValues::parse("lr = 0.001\ndepth_lr = 0.01\nlambda_w = 0\npyramid_levels = 2\n", "c").unwrap();
        let cfg = RunConfig::from_kv(&kv).unwrap();
        assert_eq!((cfg.pose_adam.lr, cfg.depth_adam.lr), (0.001, 0.01));
        assert_eq!(cfg.weights.lambda_w, 0.0);
        assert_eq!(cfg.pyramid.levels, 2);
        assert!(RunConfig::from_kv(&KeyValues::parse("lr = -1", "c").unwrap()).is_err());
        assert!(RunConfig::from_kv(&KeyValues::parse("learning_rate = 1", "c").unwrap()).is_err());
    }
}
