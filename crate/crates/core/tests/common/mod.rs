#![allow(dead_code)]

use nalgebra::Vector3;
use rigidwarp::synth::{camera_at, make_sequence, SyntheticSequence, Texture};
use rigidwarp::{BoxScene, Intrinsics, PoseSE3};

pub fn small_intrinsics() -> Intrinsics {
    Intrinsics::new(50.0, 50.0, 31.5, 23.5, 64, 48).unwrap()
}

pub fn room(k: Intrinsics, seed: u64) -> BoxScene {
    BoxScene::new(Vector3::new(5.0, 3.0, 6.0), k, Texture::Procedural { seed, scale: 0.05 }).unwrap()
}

/// Three cameras around the room center with a sideways baseline.
pub fn small_trajectory(scene: &BoxScene) -> Vec<PoseSE3> {
    let c = scene.center();
    vec![
        camera_at(c + Vector3::new(-0.12, 0.02, -0.05), 0.01, -0.03, 0.0),
        camera_at(c, 0.0, 0.0, 0.0),
        camera_at(c + Vector3::new(0.1, -0.03, 0.08), -0.02, 0.04, 0.01),
    ]
}

pub fn small_sequence(seed: u64) -> SyntheticSequence {
    let scene = room(small_intrinsics(), seed);
    make_sequence(&scene, &small_trajectory(&scene), 0.0, 0.0, seed).unwrap()
}
