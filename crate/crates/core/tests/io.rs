use proptest::prelude::*;
use rigidwarp::io::{
    load_sequence, read_depth_png, read_intrinsics, read_trajectory, write_depth_png, write_intrinsics,
    write_trajectory, SequenceLayout, Trajectory, TrajectoryRecord,
};
use rigidwarp::{DepthMap, Error, ImageBuffer, Intrinsics, PoseParams};

fn textured(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| ((x / 8 + y / 8 + c) % 3) as f64 / 2.0)
}

#[test]
fn depth_png_round_trip_at_mm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.png");
    let values: Vec<f64> = (0..12).map(|i| 0.5 + 0.123 * i as f64).collect();
    let valid: Vec<bool> = (0..12).map(|i| i % 5 != 2).collect();
    let depth = DepthMap::new(4, 3, values, valid.clone()).unwrap();
    write_depth_png(&path, &depth).unwrap();
    let back = read_depth_png(&path).unwrap();
    assert_eq!(back.valid, valid);
    for (i, ok) in valid.iter().enumerate() {
        if *ok {
            assert_eq!(back.values[i], (depth.values[i] * 1000.0).round() / 1000.0);
        }
    }
    // Once quantized, a second round trip is exact.
    write_depth_png(&path, &back).unwrap();
    assert_eq!(read_depth_png(&path).unwrap(), back);
}

#[test]
fn intrinsics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.txt");
    let k = Intrinsics::new(525.0, 524.5, 319.75, 239.5, 640, 480).unwrap();
    write_intrinsics(&path, &k).unwrap();
    assert_eq!(read_intrinsics(&path).unwrap(), k);
}

/// Writes `n` frames of `w x h` with constant 3 m depth.
fn write_sequence(root: &std::path::Path, n: usize, w: usize, h: usize, k: &Intrinsics) {
    let frames = vec![textured(w, h); n];
    let depths = vec![Some(DepthMap::constant(w, h, 3.0)); n];
    SequenceLayout::new(root).write(&frames, &depths, k, None).unwrap();
}

#[test]
fn full_hd_input_is_rescaled() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(1500.0, 1400.0, 959.5, 539.5, 1920, 1080).unwrap();
    write_sequence(dir.path(), 2, 1920, 1080, &k);
    let s = load_sequence(dir.path(), 0, 2, 256, 144).unwrap();
    let ki = s.intrinsics;
    assert_eq!((ki.width, ki.height), (256, 144));
    assert!((ki.fx - 1500.0 * 256.0 / 1920.0).abs() < 1e-12);
    assert!((ki.fy - 1400.0 * 144.0 / 1080.0).abs() < 1e-12);
    // The image center stays the image center.
    assert!((ki.cx - 127.5).abs() < 1e-12 && (ki.cy - 71.5).abs() < 1e-12);
    assert_eq!(s.frames[0].width(), 256);
    let d = s.depths[1].as_ref().unwrap();
    assert!(d.values.iter().zip(&d.valid).all(|(v, ok)| *ok && *v == 3.0));
}

#[test]
fn loader_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24).unwrap();
    write_sequence(dir.path(), 3, 32, 24, &k);
    assert!(load_sequence(dir.path(), 2, 3, 32, 24).is_err());

    let layout = SequenceLayout::new(dir.path());
    write_depth_png(&layout.depth_path(1), &DepthMap::new(32, 24, vec![0.0; 768], vec![false; 768]).unwrap()).unwrap();
    let err = load_sequence(dir.path(), 0, 3, 32, 24).unwrap_err();
    assert!(matches!(&err, Error::Load { .. }), "{err}");
    assert!(err.to_string().contains("000001.png"), "{err}");
}

#[test]
fn loading_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(80.0, 80.0, 39.5, 29.5, 80, 60).unwrap();
    write_sequence(dir.path(), 5, 80, 60, &k);
    let a = load_sequence(dir.path(), 0, 5, 40, 30).unwrap();
    let b = load_sequence(dir.path(), 0, 5, 40, 30).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.depths, b.depths);
    assert_eq!(a.reference_index(), 2);
}

fn record() -> impl Strategy<Value = TrajectoryRecord> {
    (0usize..1000, prop::array::uniform6(-3.0..3.0f64)).prop_map(|(index, a)| TrajectoryRecord {
        index,
        pose: PoseParams::from_array(a),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_round_trip(reference in 0usize..1000, records in prop::collection::vec(record(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let t = Trajectory { reference, records };
        write_trajectory(&path, &t).unwrap();
        prop_assert_eq!(read_trajectory(&path).unwrap(), t);
    }
}
