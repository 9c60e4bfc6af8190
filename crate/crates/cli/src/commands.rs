use std::path::{Path, PathBuf};

use log::info;
use rigidwarp::io::{
    eval_depth, eval_pose, load_sequence, read_camera_path, read_depth_png, read_intrinsics, read_rgb_png,
    read_trajectory, write_depth_png, write_loss_csv, write_rgb_png, write_trajectory, KeyValues, RunConfig,
    SequenceLayout, Trajectory, TrajectoryRecord,
};
use rigidwarp::optimizer::{optimize_depth, optimize_pose, SequenceState};
use rigidwarp::{inverse_warp, make_sequence, BoxScene, DepthMap, Error, ImageBuffer, PoseParams, Result};

use crate::Command;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { scene, trajectory, out } => synth(&scene, &trajectory, &out),
        Command::Warp {
            seq,
            reference,
            target,
            pose,
            out,
        } => warp(&seq, reference, target, &pose, &out),
        Command::SolvePose {
            seq,
            config,
            out,
            losses,
        } => {
            let losses = losses.unwrap_or_else(|| out.with_extension("csv"));
            solve_pose(&seq, config.as_deref(), &out, &losses)
        }
        Command::RefineDepth { seq, traj, config, out } => refine_depth(&seq, &traj, config.as_deref(), &out),
        Command::Eval { pred, gt } => {
            for line in eval(&pred, &gt)? {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn synth(scene_path: &Path, trajectory: &Path, out: &Path) -> Result<()> {
    let kv = KeyValues::read(scene_path)?;
    let scene = BoxScene::from_config(&kv)?;
    let noise = kv.get_or("depth_noise", 0.0)?;
    let holes = kv.get_or("holes", 0.0)?;
    let seed = kv.get_or("seed", 0u64)?;
    kv.finish()?;
    let cameras = read_camera_path(trajectory)?;
    let seq = make_sequence(&scene, &cameras, noise, holes, seed)?;
    SequenceLayout::new(out).write_synthetic(&seq)?;
    info!("wrote {} frames to {}", cameras.len(), out.display());
    Ok(())
}

fn parse_pose(text: &str) -> Result<PoseParams> {
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse pose '{text}'")))?;
    if values.len() != 6 || !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Config(format!("pose needs six numbers 'tx ty tz rx ry rz', got '{text}'")));
    }
    Ok(PoseParams::from_slice(&values))
}

fn warp(seq: &Path, reference: usize, target: usize, pose: &str, out: &Path) -> Result<()> {
    let pose = parse_pose(pose)?;
    let layout = SequenceLayout::new(seq);
    let count = layout.frame_count()?;
    for i in [reference, target] {
        if i >= count {
            return Err(Error::Config(format!("frame {i} does not exist (sequence has {count})")));
        }
    }
    if !layout.has_depth() {
        return Err(Error::Config("warping needs reference depth".into()));
    }
    let k = read_intrinsics(&layout.intrinsics_path())?;
    let image = read_rgb_png(&layout.rgb_path(target))?;
    let depth = read_depth_png(&layout.depth_path(reference))?;
    let (warped, mask) = inverse_warp(&image, &depth, &pose.to_pose(), &k)?;
    let warped = ImageBuffer::new(
        warped.width(),
        warped.height(),
        warped.channels(),
        warped.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )?;
    write_rgb_png(out, &warped)?;
    let mask_img = ImageBuffer::new(
        k.width,
        k.height,
        1,
        mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect(),
    )?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("warp");
    write_rgb_png(&out.with_file_name(format!("{stem}_mask.png")), &mask_img)?;
    Ok(())
}

fn config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::read)
}

fn load(seq: &Path, cfg: &RunConfig) -> Result<SequenceState> {
    load_sequence(seq, cfg.start, cfg.frames, cfg.width, cfg.height)
}

fn solve_pose(seq: &Path, config_path: Option<&Path>, out: &Path, losses: &Path) -> Result<()> {
    let cfg = config(config_path)?;
    let state = load(seq, &cfg)?;
    let solution = optimize_pose(&state, &cfg.weights, &cfg.pose_adam, &cfg.pyramid)?;
    let records = state
        .target_indices()
        .into_iter()
        .zip(&solution.poses)
        .map(|(t, pose)| TrajectoryRecord {
            index: cfg.start + t,
            pose: *pose,
        })
        .collect();
    let trajectory = Trajectory {
        reference: cfg.start + state.reference_index(),
        records,
    };
    write_trajectory(out, &trajectory)?;
    write_loss_csv(losses, &solution.history)?;
    if let Some(last) = solution.history.last() {
        info!("final loss {}", last.breakdown.l_total);
    }
    Ok(())
}

fn refine_depth(seq: &Path, traj: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = config(config_path)?;
    let mut state = load(seq, &cfg)?;
    let trajectory = read_trajectory(traj)?;
    let r = cfg.start + state.reference_index();
    let poses = state
        .target_indices()
        .into_iter()
        .map(|t| {
            trajectory
                .relative(r, cfg.start + t)
                .map(|p| PoseParams::from_pose(&p))
                .ok_or_else(|| Error::load(traj, format!("no pose for frame {}", cfg.start + t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ri = state.reference_index();
    if let Some(d) = cfg.init_depth {
        state.depths[ri] = Some(DepthMap::constant(cfg.width, cfg.height, d));
    }
    if state.reference_depth().is_none() {
        return Err(Error::Config(
            "the sequence has no depth; set init_depth in the config to start from a plane".into(),
        ));
    }
    let solution = optimize_depth(&state, &poses, &cfg.weights, &cfg.depth_adam, &cfg.pyramid)?;
    std::fs::create_dir_all(out).map_err(|e| Error::load(out, e.to_string()))?;
    write_depth_png(&out.join(format!("{r:06}.png")), &solution.depth)?;
    write_loss_csv(&out.join("losses.csv"), &solution.history)?;
    Ok(())
}

/// Ground-truth trajectory from a trajectory file or a sequence directory.
fn gt_trajectory(gt: &Path) -> Result<Trajectory> {
    if gt.is_dir() {
        read_trajectory(&SequenceLayout::new(gt).poses_gt_path())
    } else {
        read_trajectory(gt)
    }
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Depth PNGs in `dir`, sorted by name.
fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::load(dir, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_png(p))
        .collect();
    out.sort();
    Ok(out)
}

fn gt_depth_for(gt: &Path, name: &std::ffi::OsStr) -> PathBuf {
    let nested = gt.join("depth").join(name);
    if nested.exists() {
        nested
    } else {
        gt.join(name)
    }
}

/// Pooled depth RMSE; ground truth is resampled to the prediction size.
fn depth_rmse(pairs: &[(PathBuf, PathBuf)]) -> Result<f64> {
    let mut sq = 0.0;
    let mut n = 0usize;
    for (p, g) in pairs {
        let pred = read_depth_png(p)?;
        let gt = read_depth_png(g)?.resize_nearest_valid(pred.width, pred.height);
        let count = pred
            .valid
            .iter()
            .zip(&gt.valid)
            .filter(|(a, b)| **a && **b)
            .count();
        if count == 0 {
            continue;
        }
        let rmse = eval_depth(&pred, &gt)?;
        sq += rmse * rmse * count as f64;
        n += count;
    }
    if n == 0 {
        return Err(Error::Domain("no pixel is valid in both prediction and ground truth".into()));
    }
    Ok((sq / n as f64).sqrt())
}

fn eval(pred: &Path, gt: &Path) -> Result<Vec<String>> {
    if pred.is_dir() {
        let pairs = pngs_in(pred)?
            .into_iter()
            .map(|p| {
                let g = gt_depth_for(gt, p.file_name().expect("file"));
                (p, g)
            })
            .collect::<Vec<_>>();
        if pairs.is_empty() {
            return Err(Error::load(pred, "no depth PNGs"));
        }
        return Ok(vec![format!("depth_rmse_m={}", depth_rmse(&pairs)?)]);
    }
    if is_png(pred) {
        let g = if gt.is_dir() {
            gt_depth_for(gt, pred.file_name().expect("file"))
        } else {
            gt.to_path_buf()
        };
        return Ok(vec![format!("depth_rmse_m={}", depth_rmse(&[(pred.to_path_buf(), g)])?)]);
    }
    let predicted = read_trajectory(pred)?;
    let truth = gt_trajectory(gt)?;
    let mut p = Vec::new();
    let mut g = Vec::new();
    for rec in &predicted.records {
        let rel = truth.relative(predicted.reference, rec.index).ok_or_else(|| {
            Error::Config(format!(
                "ground truth has no pose for frames {} and {}",
                predicted.reference, rec.index
            ))
        })?;
        p.push(rec.pose.to_pose());
        g.push(rel);
    }
    let e = eval_pose(&p, &g)?;
    Ok(vec![
        format!("trans_rmse_m={}", e.trans_rmse_m),
        format!("rot_rmse_deg={}", e.rot_rmse_deg),
    ])
}
