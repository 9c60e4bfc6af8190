mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidwarp::gradients::{fd_oracle, grad_depth, grad_pose, relative_error, VariableRef};
use rigidwarp::losses::ConsistencyParams;
use rigidwarp::{DepthMap, LossWeights, PoseParams, Problem, Target, Variables};

const POSE_STEP: f64 = 1e-7;
const DEPTH_STEP: f64 = 1e-7;

struct Case {
    seq: rigidwarp::synth::SyntheticSequence,
    gt_partial: DepthMap,
}

fn case(seed: u64) -> Case {
    let seq = common::small_sequence(seed);
    let r = seq.state.reference_index();
    let mut gt_partial = seq.state.gt_depths[r].clone().unwrap();
    for (i, v) in gt_partial.valid.iter_mut().enumerate() {
        *v = i % 3 == 0;
    }
    Case { seq, gt_partial }
}

fn perturbed(case: &Case, rng: &mut ChaCha8Rng) -> Variables {
    let s = &case.seq.state;
    let poses: Vec<PoseParams> = s
        .gt_poses
        .as_ref()
        .unwrap()
        .iter()
        .map(|p| {
            let mut a = p.to_array();
            for (i, v) in a.iter_mut().enumerate() {
                let scale = if i < 3 { 0.01 } else { 0.005 };
                *v += rng.random_range(-scale..scale);
            }
            PoseParams::from_array(a)
        })
        .collect();
    let mut vars = Variables::from_depth(s.reference_depth().unwrap(), poses).unwrap();
    for rho in vars.inv_depth.iter_mut() {
        *rho *= 1.0 + rng.random_range(-0.05..0.05);
    }
    vars
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_pose = 0.0f64;
    let mut worst_depth = 0.0f64;
    for state in 0..20 {
        let c = case(state % 3);
        let s = &c.seq.state;
        let r = s.reference_index();
        let targets = s
            .target_indices()
            .into_iter()
            .map(|t| Target { image: &s.frames[t], depth: s.depths[t].as_ref() })
            .collect();
        let weights = LossWeights::default();
        let problem = Problem::new(
            s.intrinsics,
            &s.frames[r],
            targets,
            Some(&c.gt_partial),
            weights,
            ConsistencyParams::default(),
        )
        .unwrap();
        let vars = perturbed(&c, &mut rng);
        let masks = problem.masks(&vars).unwrap();
        let gp = grad_pose(&problem, &vars, &masks).unwrap();
        assert!(!gp.all_masked);
        for (pair, g) in gp.pairs.iter().enumerate() {
            for param in 0..6 {
                let fd = fd_oracle(&problem, &vars, &masks, VariableRef::Pose { pair, param }, POSE_STEP).unwrap();
                let e = relative_error(g.0[param], fd);
                worst_pose = worst_pose.max(e);
                assert!(e < 1e-3, "state {state} pair {pair} param {param}: analytic {} fd {fd}", g.0[param]);
            }
        }
        let gd = grad_depth(&problem, &vars, &masks).unwrap();
        for _ in 0..12 {
            let pixel = rng.random_range(0..vars.inv_depth.len());
            let fd = fd_oracle(&problem, &vars, &masks, VariableRef::InvDepth { pixel }, DEPTH_STEP).unwrap();
            let e = relative_error(gd.values[pixel], fd);
            worst_depth = worst_depth.max(e);
            assert!(e < 1e-3, "state {state} pixel {pixel}: analytic {} fd {fd}", gd.values[pixel]);
        }
    }
    println!("worst relative error: pose {worst_pose:.2e}, depth {worst_depth:.2e}");
}

fn problem_with<'a>(c: &'a Case, weights: LossWeights) -> Problem<'a> {
    let s = &c.seq.state;
    let r = s.reference_index();
    let targets = s
        .target_indices()
        .into_iter()
        .map(|t| Target { image: &s.frames[t], depth: s.depths[t].as_ref() })
        .collect();
    Problem::new(s.intrinsics, &s.frames[r], targets, Some(&c.gt_partial), weights, ConsistencyParams::default())
        .unwrap()
}

#[test]
fn linear_surrogate_is_exact() {
    let c = 0.37;
    assert!((rigidwarp::central_difference(|tx| c * tx, 0.2, 1e-4) - c).abs() < 1e-10);
}

#[test]
fn step_sweep_error_is_v_shaped() {
    let c = case(1);
    let problem = problem_with(&c, LossWeights::default());
    let vars = perturbed(&c, &mut ChaCha8Rng::seed_from_u64(3));
    let masks = problem.masks(&vars).unwrap();
    let analytic = grad_pose(&problem, &vars, &masks).unwrap().pairs[0].0[4];
    let steps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12];
    let errors: Vec<f64> = steps
        .iter()
        .map(|h| {
            let which = VariableRef::Pose { pair: 0, param: 4 };
            (fd_oracle(&problem, &vars, &masks, which, *h).unwrap() - analytic).abs()
        })
        .collect();
    let best = errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    assert!(best > 0 && best < steps.len() - 1, "minimum at the edge: {errors:?}");
    assert!(errors[0] > 10.0 * errors[best] && errors[steps.len() - 1] > 10.0 * errors[best], "{errors:?}");
}

#[test]
fn weak_only_gradient_vanishes_at_ground_truth() {
    let c = case(2);
    let s = &c.seq.state;
    let weights = LossWeights::new(0.0, 0.0, 0.0, 1.0).unwrap();
    let problem = problem_with(&c, weights);
    let gt = s.reference_gt_depth().unwrap();
    let vars = Variables::from_depth(gt, s.gt_poses.clone().unwrap()).unwrap();
    let masks = problem.masks(&vars).unwrap();
    assert!(grad_depth(&problem, &vars, &masks).unwrap().values.iter().all(|g| *g == 0.0));

    // Away from the truth only pixels with ground truth move.
    let vars = perturbed(&c, &mut ChaCha8Rng::seed_from_u64(4));
    let g = grad_depth(&problem, &vars, &masks).unwrap();
    for (i, v) in g.values.iter().enumerate() {
        if !c.gt_partial.valid[i] {
            assert_eq!(*v, 0.0);
        }
    }
    assert!(g.values.iter().any(|v| *v != 0.0));
}

#[test]
fn identical_pair_at_identity_has_zero_pose_gradient() {
    let c = case(0);
    let s = &c.seq.state;
    let r = s.reference_index();
    let flat = DepthMap::constant(s.intrinsics.width, s.intrinsics.height, 2.0);
    let problem = Problem::new(
        s.intrinsics,
        &s.frames[r],
        vec![Target { image: &s.frames[r], depth: None }],
        None,
        LossWeights::default(),
        ConsistencyParams::default(),
    )
    .unwrap();
    let vars = Variables::from_depth(&flat, vec![PoseParams::zero()]).unwrap();
    let masks = problem.masks(&vars).unwrap();
    let g = grad_pose(&problem, &vars, &masks).unwrap();
    assert!(g.pairs[0].norm() < 1e-9, "{:?}", g.pairs[0]);
}

#[test]
fn gradients_are_deterministic() {
    let c = case(1);
    let problem = problem_with(&c, LossWeights::default());
    let vars = perturbed(&c, &mut ChaCha8Rng::seed_from_u64(5));
    let masks = problem.masks(&vars).unwrap();
    let a = grad_depth(&problem, &vars, &masks).unwrap();
    let b = grad_depth(&problem, &vars, &masks).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(grad_pose(&problem, &vars, &masks).unwrap().pairs, grad_pose(&problem, &vars, &masks).unwrap().pairs);
}
