//! Shared fixtures for the criterion benchmarks.

use altisr_core::skysim::{render_scene, CameraModel, SceneSpec};
use altisr_core::Image;

/// A seeded ground-texture render, `side` pixels square.
pub fn scene(seed: u64, side: usize) -> Image {
    render_scene(
        &SceneSpec::from_seed(seed),
        40.0,
        &CameraModel::desk(),
        side,
        side,
    )
    .expect("render")
}
