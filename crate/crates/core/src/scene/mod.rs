//! Deterministic free-field scene synthesis: linear array geometry, plane-wave
//! steering delays and two-speaker mixing at a controlled SIR.

mod dataset;
mod geometry;
mod simulate;
pub mod source;

pub use dataset::{
    generate_dataset, load_manifest, load_scene, scene_spec_for, DatasetOptions, DoaPolicy,
    ManifestEntry,
};
pub use geometry::{ArrayGeometry, SOUND_SPEED};
pub use simulate::{scene_seed, simulate_from_spec, simulate_scene, Scene, SceneSpec};
