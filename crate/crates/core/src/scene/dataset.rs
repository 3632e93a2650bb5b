use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use super::simulate::{scene_seed, simulate_from_spec, Scene, SceneSpec};
use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::metrics::AzimuthBucket;

/// One row of `manifest.json`. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub mixture_path: String,
    pub target_path: String,
    pub interferer_path: String,
    pub target_doa_deg: f64,
    pub interferer_doa_deg: f64,
    pub sir_db: f64,
    pub seed: u64,
    pub bucket: AzimuthBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoaPolicy {
    /// Scene `i` falls in azimuth-difference bucket `i mod 4`.
    BucketBalanced,
    /// Independent uniform DOAs on the 1° grid.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub count: usize,
    pub seed: u64,
    pub policy: DoaPolicy,
    pub duration_s: f64,
    pub geometry: ArrayGeometry,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            count: 8,
            seed: 0,
            policy: DoaPolicy::BucketBalanced,
            duration_s: 2.0,
            geometry: ArrayGeometry::default_linear8(),
        }
    }
}

fn sample_doas(rng: &mut ChaCha8Rng, policy: DoaPolicy, index: usize) -> (f64, f64) {
    match policy {
        DoaPolicy::Uniform => loop {
            let a: u32 = rng.gen_range(0..=180);
            let b: u32 = rng.gen_range(0..=180);
            if a != b {
                return (a as f64, b as f64);
            }
        },
        DoaPolicy::BucketBalanced => {
            let (lo, hi) = AzimuthBucket::ALL[index % 4].sampling_range();
            loop {
                let target: i64 = rng.gen_range(0..=180);
                let diff = rng.gen_range(lo..=hi) as i64;
                let other = if rng.gen::<bool>() {
                    target + diff
                } else {
                    target - diff
                };
                if (0..=180).contains(&other) {
                    return (target as f64, other as f64);
                }
            }
        }
    }
}

/// Scene parameters for index `i`; depends only on `(seed, i)`.
pub fn scene_spec_for(opts: &DatasetOptions, index: usize) -> SceneSpec {
    let seed = scene_seed(opts.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (target_doa, interferer_doa) = sample_doas(&mut rng, opts.policy, index);
    let sir_db = rng.gen_range(-600i32..=600) as f64 / 100.0;
    SceneSpec {
        target_doa,
        interferer_doa,
        sir_db,
        seed,
        duration_s: opts.duration_s,
    }
}

/// Writes `count` scenes as WAV triples plus `manifest.json` and
/// `geometry.json` into `out_dir`.
pub fn generate_dataset(opts: &DatasetOptions, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries = (0..opts.count)
        .into_par_iter()
        .map(|i| {
            let spec = scene_spec_for(opts, i);
            let scene = simulate_from_spec(&spec, &opts.geometry)?;
            let id = format!("scene_{i:04}");
            let entry = ManifestEntry {
                mixture_path: format!("{id}_mix.wav"),
                target_path: format!("{id}_target.wav"),
                interferer_path: format!("{id}_interferer.wav"),
                target_doa_deg: spec.target_doa,
                interferer_doa_deg: spec.interferer_doa,
                sir_db: spec.sir_db,
                seed: spec.seed,
                bucket: AzimuthBucket::from_doas(spec.target_doa, spec.interferer_doa),
                id,
            };
            write_wav(
                out_dir.join(&entry.mixture_path),
                &scene.mixture,
                WavFormat::Float32,
            )?;
            write_wav(
                out_dir.join(&entry.target_path),
                &scene.target,
                WavFormat::Float32,
            )?;
            write_wav(
                out_dir.join(&entry.interferer_path),
                &scene.interferer,
                WavFormat::Float32,
            )?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&out_dir.join("manifest.json"), &entries)?;
    if opts.count > 0 {
        write_json(&out_dir.join("geometry.json"), &opts.geometry)?;
    }
    Ok(entries)
}

/// Reads a manifest; returns the entries, the directory paths are relative
/// to, and the array geometry (`geometry.json` next to the manifest, or the
/// default array).
pub fn load_manifest(path: &Path) -> Result<(Vec<ManifestEntry>, PathBuf, ArrayGeometry)> {
    let entries: Vec<ManifestEntry> = read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let geo_path = base.join("geometry.json");
    let geometry = if geo_path.exists() {
        let g: ArrayGeometry = read_json(&geo_path)?;
        g.validate()?;
        g
    } else {
        ArrayGeometry::default_linear8()
    };
    Ok((entries, base, geometry))
}

pub fn load_scene(entry: &ManifestEntry, base: &Path, geometry: &ArrayGeometry) -> Result<Scene> {
    let mixture = read_wav(base.join(&entry.mixture_path))?;
    let target = read_wav(base.join(&entry.target_path))?;
    let interferer = read_wav(base.join(&entry.interferer_path))?;
    if mixture.channels() != geometry.channels() {
        return Err(Error::Config(format!(
            "{}: {} channels but the array has {}",
            entry.mixture_path,
            mixture.channels(),
            geometry.channels()
        )));
    }
    Ok(Scene {
        mixture,
        target,
        interferer,
        spec: SceneSpec {
            target_doa: entry.target_doa_deg,
            interferer_doa: entry.interferer_doa_deg,
            sir_db: entry.sir_db,
            seed: entry.seed,
            duration_s: 0.0,
        },
        geometry: geometry.clone(),
    })
}
