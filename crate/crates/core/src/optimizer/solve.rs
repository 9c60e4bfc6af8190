use log::{debug, info};

use super::adam::{adam_step, AdamConfig, AdamMoments};
use super::pyramid::{build, upsample2, Level, PyramidConfig};
use super::SequenceState;
use crate::error::{Error, Result};
use crate::geometry::PoseParams;
use crate::image::{DepthMap, ImageBuffer};
use crate::losses::{ConsistencyParams, LossBreakdown, LossWeights};
use crate::objective::{Evaluation, Gradient, Problem, Target, Variables};

/// Smallest inverse depth the optimizer will produce (10 km).
const MIN_INV_DEPTH: f64 = 1e-4;
/// Without the line guard, this many consecutive loss increases abort.
const DIVERGENCE_RUN: usize = 50;
/// Minimum fraction of pixels with visible intensity change.
const MIN_TEXTURED_FRACTION: f64 = 0.01;
const TEXTURE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pose,
    Depth,
}

/// Loss after an accepted step (iteration 0 is the starting point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub stage: Stage,
    /// Pyramid level, 0 being full resolution.
    pub level: usize,
    pub iter: usize,
    pub breakdown: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub poses: Vec<PoseParams>,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSolution {
    pub depth: DepthMap,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub poses: Vec<PoseParams>,
    pub depth: DepthMap,
    pub history: Vec<IterationRecord>,
    /// Full-resolution loss before the first round and after each stage.
    pub stage_losses: Vec<LossBreakdown>,
}

/// Fails when `image` has almost no intensity variation, in which case the
/// photometric term cannot constrain anything.
pub fn check_informative(image: &ImageBuffer) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let mut textured = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = image.intensity(x, y);
            let gx = if x + 1 < w { image.intensity(x + 1, y) - i } else { 0.0 };
            let gy = if y + 1 < h { image.intensity(x, y + 1) - i } else { 0.0 };
            if gx.hypot(gy) > TEXTURE_THRESHOLD {
                textured += 1;
            }
        }
    }
    let fraction = textured as f64 / (w * h) as f64;
    if fraction < MIN_TEXTURED_FRACTION {
        return Err(Error::Optimization(format!(
            "uninformative photometric term: only {:.2}% of pixels have intensity variation",
            100.0 * fraction
        )));
    }
    Ok(())
}

fn base_level(seq: &SequenceState) -> Level {
    Level {
        intrinsics: seq.intrinsics,
        frames: seq.frames.clone(),
        depths: seq.depths.clone(),
        gt_depths: seq.gt_depths.clone(),
    }
}

fn problem<'a>(seq: &SequenceState, level: &'a Level, weights: LossWeights) -> Result<Problem<'a>> {
    let r = seq.reference_index();
    let targets = seq
        .target_indices()
        .into_iter()
        .map(|t| Target {
            image: &level.frames[t],
            depth: level.depths[t].as_ref(),
        })
        .collect();
    Problem::new(
        level.intrinsics,
        &level.frames[r],
        targets,
        level.gt_depths[r].as_ref(),
        weights,
        ConsistencyParams::default(),
    )
}

fn prepare(seq: &SequenceState, adam: &AdamConfig, pyramid: &PyramidConfig) -> Result<Vec<Level>> {
    seq.validate()?;
    adam.validate()?;
    pyramid.validate()?;
    for f in &seq.frames {
        check_informative(f)?;
    }
    let k = &seq.intrinsics;
    let levels = pyramid.effective_levels(k.width, k.height);
    if levels < pyramid.levels {
        info!(
            "using {levels} of {} pyramid levels for {}x{} images",
            pyramid.levels, k.width, k.height
        );
    }
    Ok(build(base_level(seq), levels))
}

fn require_photometric(eval: &Evaluation, level: usize) -> Result<()> {
    match eval.empty_photometric_pair() {
        Some(j) => Err(Error::Optimization(format!(
            "photometric term of pair {j} has no valid pixel at pyramid level {level}"
        ))),
        None => Ok(()),
    }
}

/// Which variables a descent moves.
trait Block {
    const STAGE: Stage;
    fn read(vars: &Variables) -> Vec<f64>;
    fn write(vars: &mut Variables, params: &[f64]);
    fn grad(grad: Gradient) -> Vec<f64>;
}

struct PoseBlock;

impl Block for PoseBlock {
    const STAGE: Stage = Stage::Pose;
    fn read(vars: &Variables) -> Vec<f64> {
        vars.poses.iter().flat_map(|p| p.to_array()).collect()
    }
    fn write(vars: &mut Variables, params: &[f64]) {
        for (pose, chunk) in vars.poses.iter_mut().zip(params.chunks(6)) {
            *pose = PoseParams::from_slice(chunk);
        }
    }
    fn grad(grad: Gradient) -> Vec<f64> {
        grad.poses.into_iter().flatten().collect()
    }
}

struct DepthBlock;

impl Block for DepthBlock {
    const STAGE: Stage = Stage::Depth;
    fn read(vars: &Variables) -> Vec<f64> {
        vars.inv_depth.clone()
    }
    fn write(vars: &mut Variables, params: &[f64]) {
        for ((rho, p), ok) in vars.inv_depth.iter_mut().zip(params).zip(&vars.valid) {
            if *ok {
                *rho = p.max(MIN_INV_DEPTH);
            }
        }
    }
    fn grad(grad: Gradient) -> Vec<f64> {
        grad.inv_depth
    }
}

/// Adam descent of one block at one level. Returns the final variables.
fn descend<B: Block>(
    problem: &Problem<'_>,
    mut vars: Variables,
    adam: &AdamConfig,
    level: usize,
    history: &mut Vec<IterationRecord>,
) -> Result<Variables> {
    let masks = problem.masks(&vars)?;
    let (eval, grad) = problem.evaluate_with_gradient(&vars, &masks)?;
    require_photometric(&eval, level)?;
    let mut record = |iter: usize, breakdown: LossBreakdown| {
        history.push(IterationRecord {
            stage: B::STAGE,
            level,
            iter,
            breakdown,
        })
    };
    record(0, eval.breakdown);
    let mut loss = eval.breakdown.l_total;
    let mut grad = B::grad(grad);
    let mut params = B::read(&vars);
    let mut moments = AdamMoments::zeros(params.len());
    let mut t = 0;
    let mut step = *adam;
    let mut increases = 0;
    let mut rejected = 0;
    let mut why = "max_iters";
    for iter in 1..=adam.max_iters {
        let mut cand_params = params.clone();
        let mut cand_moments = moments.clone();
        adam_step(&mut cand_params, &grad, &mut cand_moments, &step, t + 1)?;
        let mut cand = vars.clone();
        B::write(&mut cand, &cand_params);
        let masks = problem.masks(&cand)?;
        let (eval, cand_grad) = problem.evaluate_with_gradient(&cand, &masks)?;
        let new_loss = eval.breakdown.l_total;
        let worse = eval.empty_photometric_pair().is_some() || !(new_loss <= loss);
        if adam.line_guard && worse {
            step.lr *= 0.5;
            rejected += 1;
            debug!("level {level} iter {iter}: rejected step, lr -> {:e}", step.lr);
            if step.lr < adam.lr * adam.lr_floor {
                why = "lr_floor";
                break;
            }
            continue;
        }
        require_photometric(&eval, level)?;
        if worse {
            increases += 1;
            if increases >= DIVERGENCE_RUN {
                return Err(Error::Optimization(format!(
                    "loss increased for {DIVERGENCE_RUN} consecutive iterations at pyramid level {level}"
                )));
            }
        } else {
            increases = 0;
        }
        t += 1;
        step.lr = (step.lr * adam.lr_growth).min(adam.lr);
        let change = loss - new_loss;
        params = B::read(&cand);
        vars = cand;
        moments = cand_moments;
        grad = B::grad(cand_grad);
        loss = new_loss;
        record(iter, eval.breakdown);
        if change.abs() < adam.tolerance {
            why = "tol";
            break;
        }
    }
    debug!(
        "level {level}: {t} accepted, {rejected} rejected, lr {:e}, stopped by {why}, loss {loss}",
        step.lr
    );
    Ok(vars)
}

/// Coarse-to-fine pose estimation with the reference depth held fixed.
pub fn optimize_pose(
    seq: &SequenceState,
    weights: &LossWeights,
    adam: &AdamConfig,
    pyramid: &PyramidConfig,
) -> Result<PoseSolution> {
    if seq.reference_depth().is_none() {
        return Err(Error::Config("pose estimation needs a reference depth map".into()));
    }
    let levels = prepare(seq, adam, pyramid)?;
    let r = seq.reference_index();
    let mut poses = seq.poses.clone();
    let mut history = Vec::new();
    for (l, level) in levels.iter().enumerate().rev() {
        let depth = level.depths[r].as_ref().expect("checked above");
        let problem = problem(seq, level, *weights)?;
        let vars = Variables::from_depth(depth, poses)?;
        let vars = descend::<PoseBlock>(&problem, vars, adam, l, &mut history)?;
        poses = vars.poses;
        debug!("pose level {l}: {poses:?}");
    }
    Ok(PoseSolution { poses, history })
}

/// Coarse-to-fine refinement of the reference inverse depth with the poses
/// held fixed. Each level starts from the initial depth at that resolution
/// plus the upsampled change found at the coarser level.
pub fn optimize_depth(
    seq: &SequenceState,
    poses: &[PoseParams],
    weights: &LossWeights,
    adam: &AdamConfig,
    pyramid: &PyramidConfig,
) -> Result<DepthSolution> {
    if seq.reference_depth().is_none() {
        return Err(Error::Config("depth refinement needs an initial reference depth map".into()));
    }
    if poses.len() != seq.poses.len() {
        return Err(Error::Config(format!("{} poses for {} targets", poses.len(), seq.poses.len())));
    }
    let levels = prepare(seq, adam, pyramid)?;
    let r = seq.reference_index();
    let mut history = Vec::new();
    let mut increment: Option<(Vec<f64>, usize, usize)> = None;
    let mut result = None;
    for (l, level) in levels.iter().enumerate().rev() {
        let init = level.depths[r].as_ref().expect("checked above");
        let problem = problem(seq, level, *weights)?;
        let mut vars = Variables::from_depth(init, poses.to_vec())?;
        let base = vars.inv_depth.clone();
        if let Some((delta, cw, ch)) = &increment {
            let up = upsample2(delta, *cw, *ch, init.width, init.height);
            let shifted: Vec<f64> = base.iter().zip(&up).map(|(b, d)| b + d).collect();
            DepthBlock::write(&mut vars, &shifted);
        }
        let vars = descend::<DepthBlock>(&problem, vars, adam, l, &mut history)?;
        let delta = vars
            .inv_depth
            .iter()
            .zip(&base)
            .zip(&vars.valid)
            .map(|((v, b), ok)| if *ok { v - b } else { 0.0 })
            .collect();
        increment = Some((delta, init.width, init.height));
        result = Some(vars.depth_map());
    }
    Ok(DepthSolution {
        depth: result.expect("at least one level"),
        history,
    })
}

fn full_resolution_loss(seq: &SequenceState, weights: &LossWeights) -> Result<LossBreakdown> {
    let level = base_level(seq);
    let problem = problem(seq, &level, *weights)?;
    let depth = seq.reference_depth().expect("checked by the caller");
    let vars = Variables::from_depth(depth, seq.poses.clone())?;
    Ok(problem.evaluate_fresh(&vars)?.breakdown)
}

/// Alternates pose estimation and depth refinement for `rounds` rounds.
/// A stage whose result raises the full-resolution loss is discarded.
pub fn alternate_optimize(
    seq: &SequenceState,
    weights: &LossWeights,
    pose_adam: &AdamConfig,
    depth_adam: &AdamConfig,
    pyramid: &PyramidConfig,
    rounds: usize,
) -> Result<JointSolution> {
    if rounds == 0 {
        return Err(Error::Config("at least one round is required".into()));
    }
    if seq.reference_depth().is_none() {
        return Err(Error::Config("joint optimization needs an initial reference depth map".into()));
    }
    let r = seq.reference_index();
    let mut state = seq.clone();
    let mut current = full_resolution_loss(&state, weights)?;
    let mut stage_losses = vec![current];
    let mut history = Vec::new();
    for round in 0..rounds {
        let pose = optimize_pose(&state, weights, pose_adam, pyramid)?;
        let mut candidate = state.clone();
        candidate.poses = pose.poses;
        let loss = full_resolution_loss(&candidate, weights)?;
        history.extend(pose.history);
        if loss.l_total <= current.l_total {
            state = candidate;
            current = loss;
        } else {
            info!("round {round}: pose stage raised the loss, keeping the previous poses");
        }
        stage_losses.push(current);

        let depth = optimize_depth(&state, &state.poses, weights, depth_adam, pyramid)?;
        let mut candidate = state.clone();
        candidate.depths[r] = Some(depth.depth);
        let loss = full_resolution_loss(&candidate, weights)?;
        history.extend(depth.history);
        if loss.l_total <= current.l_total {
            state = candidate;
            current = loss;
        } else {
            info!("round {round}: depth stage raised the loss, keeping the previous depth");
        }
        stage_losses.push(current);
    }
    let depth = state.depths[r].take().expect("reference depth is kept");
    Ok(JointSolution {
        poses: state.poses,
        depth,
        history,
        stage_losses,
    })
}
