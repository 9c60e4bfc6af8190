mod common;

use proptest::prelude::*;
use rigidwarp::losses::{f_diss, loss_consistency, loss_smooth, loss_weak, ssim, ConsistencyParams};
use rigidwarp::{DepthMap, FlowField, ImageBuffer, LossWeights, Problem, Target, Variables};

fn image(w: usize, h: usize, seed: &[f64]) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| seed[(x * 7 + y * 13 + c * 5) % seed.len()])
}

/// SSIM with a 3x3 window evaluated from its definition at one pixel; the
/// window is clipped at the border.
fn ssim_at(a: &ImageBuffer, b: &ImageBuffer, x: usize, y: usize) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for c in 0..a.channels() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                if px < 0 || py < 0 || px >= a.width() as i64 || py >= a.height() as i64 {
                    continue;
                }
                xs.push(a.get(px as usize, py as usize, c));
                ys.push(b.get(px as usize, py as usize, c));
            }
        }
        let n = xs.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (mx, my) = (mean(&xs), mean(&ys));
        let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
        let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
        let cov = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
        total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total / a.channels() as f64
}

#[test]
fn ssim_matches_direct_formula() {
    let a = image(9, 7, &[0.1, 0.8, 0.35, 0.6, 0.2]);
    let b = image(9, 7, &[0.3, 0.5, 0.9, 0.05]);
    let s = ssim(&a, &b).unwrap();
    for (x, y) in [(0, 0), (4, 3), (8, 6), (1, 5)] {
        assert!((s[y * 9 + x] - ssim_at(&a, &b, x, y)).abs() < 1e-12);
    }
}

#[test]
fn f_diss_of_constant_offset() {
    // SSIM of flat patches reduces to the luminance term.
    let a = ImageBuffer::constant(6, 6, 3, 0.4);
    let b = ImageBuffer::constant(6, 6, 3, 0.6);
    let c1 = 1e-4;
    let s = (2.0 * 0.4 * 0.6 + c1) / (0.16 + 0.36 + c1);
    let expected = 0.85 * (1.0 - s) / 2.0 + 0.15 * 0.2;
    let got = f_diss(&a, &b, &[true; 36]).unwrap();
    assert!((got.value - expected).abs() < 1e-12);
}

#[test]
fn smoothness_of_linear_ramp() {
    // Mean-normalized gradient of a ramp on a flat image: |dD/dx| / mean.
    let depth = DepthMap::from_values(5, 4, (0..20).map(|i| 1.0 + (i % 5) as f64).collect()).unwrap();
    let flat = ImageBuffer::constant(5, 4, 3, 0.5);
    let got = loss_smooth(&depth, &flat).unwrap().value;
    assert!(got > 0.0);
    let doubled = DepthMap::from_values(5, 4, depth.values.iter().map(|d| 2.0 * d).collect()).unwrap();
    assert!((loss_smooth(&doubled, &flat).unwrap().value - got).abs() < 1e-12);
}

#[test]
fn consistency_definition_example() {
    let mut delta = FlowField::zeros(3, 2);
    delta.du = vec![1.0; 6];
    delta.dv = vec![1.0; 6];
    delta.mask = vec![true; 6];
    let mask = rigidwarp::losses::ConsistencyMask {
        width: 3,
        height: 2,
        accept: vec![true; 6],
        alpha: 3.0,
        beta: 0.05,
    };
    assert_eq!(loss_consistency(&delta, &mask).unwrap().value, 2.0);
}

#[test]
fn weak_rmse_example() {
    let pred = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let gt = DepthMap::new(2, 2, vec![2.0, 2.0, 1.0, 0.0], vec![true, true, true, false]).unwrap();
    let expected = ((1.0 + 0.0 + 4.0) / 3.0f64).sqrt();
    assert!((loss_weak(&pred, Some(&gt)).unwrap().value - expected).abs() < 1e-15);
    assert_eq!(loss_weak(&pred, None).unwrap().value, 0.0);
}

#[test]
fn total_is_independent_of_pair_order() {
    let seq = common::small_sequence(11);
    let s = &seq.state;
    let r = s.reference_index();
    let targets: Vec<usize> = s.target_indices();
    let gt = s.gt_poses.clone().unwrap();
    let build = |order: &[usize]| {
        let t = order
            .iter()
            .map(|&i| Target {
                image: &s.frames[targets[i]],
                depth: s.depths[targets[i]].as_ref(),
            })
            .collect();
        let p = Problem::new(
            s.intrinsics,
            &s.frames[r],
            t,
            s.gt_depths[r].as_ref(),
            LossWeights::default(),
            ConsistencyParams::default(),
        )
        .unwrap();
        let poses = order.iter().map(|&i| gt[i]).collect();
        let v = Variables::from_depth(s.reference_depth().unwrap(), poses).unwrap();
        p.evaluate_fresh(&v).unwrap().breakdown.l_total
    };
    let a = build(&[0, 1]);
    let b = build(&[1, 0]);
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
}

proptest! {
    #[test]
    fn ssim_is_symmetric_and_bounded(
        va in prop::collection::vec(0.0..1.0f64, 5 * 4 * 3),
        vb in prop::collection::vec(0.0..1.0f64, 5 * 4 * 3),
    ) {
        let a = ImageBuffer::new(5, 4, 3, va).unwrap();
        let b = ImageBuffer::new(5, 4, 3, vb).unwrap();
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(x));
        }
    }

    #[test]
    fn f_diss_is_non_negative(
        va in prop::collection::vec(0.0..1.0f64, 6 * 5),
        vb in prop::collection::vec(0.0..1.0f64, 6 * 5),
    ) {
        let a = ImageBuffer::new(6, 5, 1, va).unwrap();
        let b = ImageBuffer::new(6, 5, 1, vb).unwrap();
        prop_assert!(f_diss(&a, &b, &[true; 30]).unwrap().value >= 0.0);
        prop_assert_eq!(f_diss(&a, &a, &[true; 30]).unwrap().value, 0.0);
    }

    #[test]
    fn weak_ignores_predictions_off_ground_truth(
        pred in prop::collection::vec(0.1..10.0f64, 12),
        noise in prop::collection::vec(0.1..10.0f64, 12),
        valid in prop::collection::vec(any::<bool>(), 12),
    ) {
        let gt = DepthMap::new(4, 3, vec![2.0; 12], valid.clone()).unwrap();
        let other: Vec<f64> = pred.iter().zip(&noise).zip(&valid).map(|((p, n), v)| if *v { *p } else { *n }).collect();
        let a = loss_weak(&DepthMap::from_values(4, 3, pred).unwrap(), Some(&gt)).unwrap();
        let b = loss_weak(&DepthMap::from_values(4, 3, other).unwrap(), Some(&gt)).unwrap();
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn smoothness_is_scale_invariant(v in prop::collection::vec(0.5..5.0f64, 20), s in 0.1..10.0f64) {
        let img = ImageBuffer::from_fn(5, 4, 3, |x, y, _| ((x * 3 + y) % 4) as f64 / 4.0);
        let a = loss_smooth(&DepthMap::from_values(5, 4, v.clone()).unwrap(), &img).unwrap().value;
        let b = loss_smooth(&DepthMap::from_values(5, 4, v.iter().map(|d| d * s).collect()).unwrap(), &img).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
}
