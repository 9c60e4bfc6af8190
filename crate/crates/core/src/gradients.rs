//! Analytic gradients of the total loss and a central-difference oracle.

use crate::error::{Error, Result};
use crate::objective::{Evaluation, FrozenMasks, Problem, Variables};

/// `∂L_T/∂(tx, ty, tz, rx, ry, rz)` of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradPose(pub [f64; 6]);

impl GradPose {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGradients {
    pub pairs: Vec<GradPose>,
    /// No pixel of any pair contributed; the gradient is identically zero.
    pub all_masked: bool,
}

/// `∂L_T/∂ρ` per reference pixel (zero where the depth is invalid).
#[derive(Debug, Clone, PartialEq)]
pub struct GradDepth {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub all_masked: bool,
}

fn all_masked(eval: &Evaluation) -> bool {
    eval.photometric.iter().all(|m| m.is_empty())
        && eval.consistency.iter().all(|c| c.is_none_or(|m| m.is_empty()))
}

/// Exact gradient of the total loss with respect to every pose, with the
/// masks held fixed.
pub fn grad_pose(problem: &Problem<'_>, vars: &Variables, masks: &FrozenMasks) -> Result<PoseGradients> {
    let (eval, grad) = problem.evaluate_with_gradient(vars, masks)?;
    Ok(PoseGradients {
        pairs: grad.poses.into_iter().map(GradPose).collect(),
        all_masked: all_masked(&eval),
    })
}

/// Exact gradient of the total loss with respect to the reference inverse
/// depth, with the masks held fixed.
pub fn grad_depth(problem: &Problem<'_>, vars: &Variables, masks: &FrozenMasks) -> Result<GradDepth> {
    let (eval, grad) = problem.evaluate_with_gradient(vars, masks)?;
    Ok(GradDepth {
        width: vars.width,
        height: vars.height,
        values: grad.inv_depth,
        all_masked: all_masked(&eval),
    })
}

/// A single scalar optimization variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableRef {
    /// Component `param` (in `tx, ty, tz, rx, ry, rz` order) of pair `pair`.
    Pose { pair: usize, param: usize },
    /// Inverse depth of reference pixel `pixel` (row-major index).
    InvDepth { pixel: usize },
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Numeric derivative of the total loss along one variable, recomputing the
/// full loss at each probe with `masks` frozen.
pub fn fd_oracle(
    problem: &Problem<'_>,
    vars: &Variables,
    masks: &FrozenMasks,
    which: VariableRef,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    match which {
        VariableRef::Pose { pair, param } if pair >= vars.poses.len() || param >= 6 => {
            return Err(Error::Config(format!("no pose variable ({pair}, {param})")));
        }
        VariableRef::InvDepth { pixel } if pixel >= vars.inv_depth.len() => {
            return Err(Error::Config(format!("no depth variable at pixel {pixel}")));
        }
        _ => {}
    }
    let mut probe = vars.clone();
    let mut failure = None;
    let x0 = read(vars, which);
    let d = central_difference(
        |x| {
            write(&mut probe, which, x);
            match problem.evaluate(&probe, masks) {
                Ok(e) => e.breakdown.l_total,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        x0,
        step,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(d),
    }
}

fn read(vars: &Variables, which: VariableRef) -> f64 {
    match which {
        VariableRef::Pose { pair, param } => vars.poses[pair].to_array()[param],
        VariableRef::InvDepth { pixel } => vars.inv_depth[pixel],
    }
}

fn write(vars: &mut Variables, which: VariableRef, value: f64) {
    match which {
        VariableRef::Pose { pair, param } => {
            let mut a = vars.poses[pair].to_array();
            a[param] = value;
            vars.poses[pair] = crate::geometry::PoseParams::from_array(a);
        }
        VariableRef::InvDepth { pixel } => vars.inv_depth[pixel] = value,
    }
}

/// `|analytic - numeric| / (|numeric| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}
