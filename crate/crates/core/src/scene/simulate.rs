use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use super::source::speech_like;
use crate::dsp::{fractional_delay, MultichannelSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Parameters of one two-speaker scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub target_doa: f64,
    pub interferer_doa: f64,
    /// Target-to-interferer power ratio at the reference channel, dB.
    pub sir_db: f64,
    pub seed: u64,
    pub duration_s: f64,
}

/// Mixture and source images; `mixture == target + interferer` sample-wise.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mixture: MultichannelSignal,
    pub target: MultichannelSignal,
    pub interferer: MultichannelSignal,
    pub spec: SceneSpec,
    pub geometry: ArrayGeometry,
}

impl Scene {
    /// The clean target at the reference channel.
    pub fn target_reference(&self) -> Vec<f64> {
        self.target.channel_vec(self.geometry.reference)
    }
}

/// SplitMix64 step; derives per-stream seeds from a base seed.
pub fn scene_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn image(geometry: &ArrayGeometry, source: &[f64], theta: f64) -> Result<MultichannelSignal> {
    let channels: Vec<Vec<f64>> = (0..geometry.channels())
        .map(|m| fractional_delay(source, geometry.channel_delay(m, theta, SAMPLE_RATE)))
        .collect();
    MultichannelSignal::from_channels(&channels, SAMPLE_RATE)
}

/// Plane-wave images of two sources, interferer scaled to `spec.sir_db`.
pub fn simulate_scene(
    spec: &SceneSpec,
    geometry: &ArrayGeometry,
    target_source: &[f64],
    interferer_source: &[f64],
) -> Result<Scene> {
    geometry.validate()?;
    let len = target_source.len().min(interferer_source.len());
    let energy = |x: &[f64]| x[..len].iter().map(|v| v * v).sum::<f64>();
    if len == 0 || energy(target_source) == 0.0 {
        return Err(Error::DegenerateSource(
            "target source has zero energy".into(),
        ));
    }
    if energy(interferer_source) == 0.0 {
        return Err(Error::DegenerateSource(
            "interferer source has zero energy".into(),
        ));
    }
    let target = image(geometry, &target_source[..len], spec.target_doa)?;
    let raw = image(geometry, &interferer_source[..len], spec.interferer_doa)?;
    let r = geometry.reference;
    let gain =
        (target.channel_power(r) / (raw.channel_power(r) * 10f64.powf(spec.sir_db / 10.0))).sqrt();
    let interferer = raw.scaled(gain);
    let mixture = target.add(&interferer)?;
    Ok(Scene {
        mixture,
        target,
        interferer,
        spec: spec.clone(),
        geometry: geometry.clone(),
    })
}

/// Generates both sources from `spec.seed` and simulates the scene.
pub fn simulate_from_spec(spec: &SceneSpec, geometry: &ArrayGeometry) -> Result<Scene> {
    let len = (spec.duration_s * SAMPLE_RATE as f64).round() as usize;
    let target = speech_like(scene_seed(spec.seed, 0), len, SAMPLE_RATE);
    let interferer = speech_like(scene_seed(spec.seed, 1), len, SAMPLE_RATE);
    simulate_scene(spec, geometry, &target, &interferer)
}
