//! Shared fixtures for the benchmarks in `benches/`.

use dynkp_core::{generate_sequence, SceneConfig, SyntheticSequence};

/// Two consecutive frames of the person-and-box scene with half-pixel noise.
pub fn person_and_box_pair() -> SyntheticSequence {
    let scene = SceneConfig { frame_count: 2, noise_sigma: 0.5, seed: 7, ..SceneConfig::person_and_box() };
    generate_sequence(&scene).expect("preset is valid")
}
