use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Axis;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BeampatternArgs, EvalArgs, FeaturesArgs, OracleArgs, SeparateArgs, SimulateArgs, TrainArgs};
use crate::beamform::{
    fd_beam_pattern, oracle_separate, oracle_weights, pattern_csv, td_beam_pattern, OracleConfig, OracleMethod,
    OracleWeights, Statistics,
};
use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::{stft, MultichannelSignal, StftKernel};
use crate::error::{Error, Result};
use crate::features::{encode, FdFeatureStack, TdFeatureStack};
use crate::io::{bank_container, load_checkpoint, save_checkpoint, write_json, TensorContainer};
use crate::metrics::{report, score, EvalRecord};
use crate::nn::{Domain, MaskSource, Pipeline, PipelineConfig, Trainer};
use crate::scene::{
    generate_dataset, load_manifest, load_scene, simulate_from_spec, ArrayGeometry, DatasetOptions, DoaPolicy,
    ManifestEntry, Scene, SceneSpec,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub duration_s: f64,
    pub policy: DoaPolicy,
    pub geometry: ArrayGeometry,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let d = DatasetOptions::default();
        Self {
            duration_s: d.duration_s,
            policy: d.policy,
            geometry: d.geometry,
        }
    }
}

/// Reads a JSON config; absent path means the default. Read and parse
/// failures are usage errors.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_scenes(manifest: &Path) -> Result<(Vec<ManifestEntry>, Vec<Scene>, ArrayGeometry)> {
    let (entries, base, geometry) = load_manifest(manifest)?;
    let scenes = entries
        .par_iter()
        .map(|e| load_scene(e, &base, &geometry))
        .collect::<Result<Vec<_>>>()?;
    Ok((entries, scenes, geometry))
}

fn scores_csv(records: &[EvalRecord]) -> String {
    let mut s = String::from("scene_id,method,bucket,si_sdr_db\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{:.6}", r.scene_id, r.method, r.bucket.label(), r.si_sdr_db);
    }
    s
}

/// Writes `eval.csv` (per-method, per-bucket means) and `scores.csv`
/// (per scene), and prints the overall means.
fn write_report(out: &Path, records: &[EvalRecord]) -> Result<()> {
    let table = report(records)?;
    write_text(&out.join("eval.csv"), &table.to_csv())?;
    write_text(&out.join("scores.csv"), &scores_csv(records))?;
    for row in &table.rows {
        println!("{:<16} {:>4} scenes  mean SI-SDR {:8.3} dB", row.method, row.count, row.overall_mean);
    }
    Ok(())
}

fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<MultichannelSignal> {
    MultichannelSignal::mono(samples, sample_rate)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg: SimulateConfig = load_config(a.config.as_deref())?;
    cfg.geometry.validate()?;
    if !(cfg.duration_s > 0.0) {
        return Err(Error::Config("duration_s must be positive".into()));
    }
    let opts = DatasetOptions {
        count: a.count,
        seed: a.seed,
        policy: cfg.policy,
        duration_s: cfg.duration_s,
        geometry: cfg.geometry,
    };
    let entries = generate_dataset(&opts, &a.out)?;
    println!("wrote {} scenes to {}", entries.len(), a.out.join("manifest.json").display());
    Ok(())
}

fn pipeline_for(config: Option<&Path>, checkpoint: Option<&Path>, seed: Option<u64>, geometry: &ArrayGeometry) -> Result<Pipeline> {
    let mut pipeline = match checkpoint {
        Some(path) => load_checkpoint(path)?.0,
        None => {
            let mut cfg: PipelineConfig = load_config(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Pipeline::new(cfg, geometry.clone())?
        }
    };
    if pipeline.geometry().channels() != geometry.channels() {
        return Err(Error::Config(format!(
            "model expects {} channels, data has {}",
            pipeline.geometry().channels(),
            geometry.channels()
        )));
    }
    if checkpoint.is_some() && seed.is_some() {
        pipeline.config.seed = seed.unwrap_or_default();
    }
    Ok(pipeline)
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let (entries, scenes, geometry) = load_scenes(&a.data)?;
    let pipeline = pipeline_for(a.config.as_deref(), a.checkpoint.as_deref(), a.seed, &geometry)?;
    create_dir(&a.out)?;
    let grid = pipeline.grid();
    let geometry = ArrayGeometry {
        pairs: pipeline.pairs().to_vec(),
        ..geometry
    };
    if pipeline.config.domain == Domain::Td {
        let bank = pipeline.filter_bank().expect("time-domain pipeline has a bank");
        let decoder = pipeline
            .store
            .find("decoder")
            .map(|id| pipeline.store.value(id).clone())
            .ok_or_else(|| Error::Container("pipeline has no decoder".into()))?
            .into_dimensionality()
            .map_err(|_| Error::Container("decoder must be 2-D".into()))?;
        bank_container(&bank, &decoder)?.save(a.out.join("bank.bkt"))?;
    }
    entries.par_iter().zip(&scenes).try_for_each(|(entry, scene)| -> Result<()> {
        let len = scene.mixture.len();
        let (front, back) = grid.analysis_padding(len);
        let y = scene.mixture.padded(front, back);
        let theta = entry.target_doa_deg;
        let mut c = TensorContainer::new();
        match pipeline.config.domain {
            Domain::Fd => {
                let kernel = StftKernel::sqrt_hann(grid.window);
                let spec = stft(&y, &kernel, grid)?;
                let f = FdFeatureStack::compute(&spec, &geometry, theta, &kernel)?;
                c.insert("spectrogram", spec.values.clone().into_dyn())?;
                c.insert("lps", f.lps.into_dyn())?;
                c.insert("ipd", f.ipd.into_dyn())?;
                c.insert("fd_df", f.fd_df.into_dyn())?;
            }
            Domain::Td => {
                let bank = pipeline.filter_bank().expect("time-domain pipeline has a bank");
                let latent = encode(&y, &bank, grid)?;
                let f = TdFeatureStack::compute(&latent, &bank, &geometry, theta, y.sample_rate())?;
                c.insert("latent", latent.values.into_dyn())?;
                c.insert("r", f.r.into_dyn())?;
                c.insert("icd", f.icd.into_dyn())?;
                c.insert("ld_df", f.ld_df.into_dyn())?;
            }
        }
        c.metadata = Some(serde_json::json!({
            "scene": entry.id,
            "domain": pipeline.config.domain,
            "window": grid.window,
            "hop": grid.hop,
            "front_padding": front,
            "length": len,
            "sample_rate": y.sample_rate(),
            "target_doa_deg": theta,
            "pairs": geometry.pairs,
        }));
        c.save(a.out.join(format!("{}.bkt", entry.id)))
    })?;
    println!("wrote features for {} scenes to {}", entries.len(), a.out.display());
    Ok(())
}

pub fn oracle_bf(a: &OracleArgs) -> Result<()> {
    let methods = if a.methods.is_empty() {
        OracleMethod::ALL.to_vec()
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<OracleMethod>>>()?
    };
    let mut cfg: OracleConfig = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.bank_seed = s;
    }
    let statistics = if a.oracle { Statistics::Oracle } else { Statistics::RatioMasked };
    let (entries, scenes, _) = load_scenes(&a.data)?;
    create_dir(&a.out)?;
    let records: Vec<Vec<EvalRecord>> = entries
        .par_iter()
        .zip(&scenes)
        .map(|(entry, scene)| {
            methods
                .iter()
                .map(|&method| {
                    let est = oracle_separate(scene, method, &cfg, statistics)?;
                    write_wav(a.out.join(format!("{}_{method}.wav", entry.id)), &est, WavFormat::Float32)?;
                    score(
                        &entry.id,
                        method.name(),
                        &est.channel_vec(0),
                        &scene.target_reference(),
                        entry.target_doa_deg,
                        entry.interferer_doa_deg,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    write_report(&a.out, &records.concat())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (entries, scenes, geometry) = load_scenes(&a.data)?;
    if entries.is_empty() {
        return Err(Error::Config(format!("{} lists no scenes", a.data.display())));
    }
    let pipeline = pipeline_for(a.config.as_deref(), None, a.seed, &geometry)?;
    let prepare = |scenes: &[Scene]| -> Result<Vec<_>> { scenes.par_iter().map(|s| pipeline.prepare_scene(s)).collect() };
    let train = prepare(&scenes)?;
    let validation = match &a.validation {
        Some(path) => prepare(&load_scenes(path)?.1)?,
        None => Vec::new(),
    };
    let masks = if a.oracle { MaskSource::Oracle } else { MaskSource::Estimator };
    let mut trainer = Trainer::new(pipeline).with_masks(masks);
    let report = trainer.fit(&train, &validation, a.epochs)?;
    create_dir(&a.out)?;
    let mut trace = String::from("step,loss\n");
    for (i, l) in report.step_losses.iter().enumerate() {
        let _ = writeln!(trace, "{i},{l:?}");
    }
    write_text(&a.out.join("loss_trace.csv"), &trace)?;
    write_json(&a.out.join("epochs.json"), &report.epochs)?;
    let extra = serde_json::json!({
        "epochs": report.epochs,
        "steps": report.step_losses.len(),
        "aborted": report.aborted,
    });
    let path = a.out.join("checkpoint.bkt");
    save_checkpoint(&path, &trainer.pipeline, extra)?;
    if let Some(reason) = report.aborted {
        return Err(Error::NonFinite(format!(
            "training stopped ({reason}); {} holds the last finite parameters",
            path.display()
        )));
    }
    for e in &report.epochs {
        println!(
            "epoch {:>3}  train {:9.4}  validation {:>9}  lr {:.2e}",
            e.epoch,
            e.train_loss,
            e.validation_loss.map_or("-".to_string(), |v| format!("{v:.4}")),
            e.learning_rate
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn model_label(config: &PipelineConfig) -> String {
    let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
    format!(
        "{}-{}",
        name(serde_json::to_value(config.domain).unwrap_or_default()),
        name(serde_json::to_value(config.beamformer).unwrap_or_default())
    )
}

pub fn separate(a: &SeparateArgs) -> Result<()> {
    let (pipeline, _) = load_checkpoint(&a.checkpoint)?;
    let (entries, scenes, geometry) = load_scenes(&a.data)?;
    if geometry.channels() != pipeline.geometry().channels() {
        return Err(Error::Config(format!(
            "checkpoint expects {} channels, data has {}",
            pipeline.geometry().channels(),
            geometry.channels()
        )));
    }
    let masks = if a.oracle { MaskSource::Oracle } else { MaskSource::Estimator };
    let label = model_label(&pipeline.config);
    create_dir(&a.out)?;
    let records = entries
        .par_iter()
        .zip(&scenes)
        .map(|(entry, scene)| {
            let input = pipeline.prepare_scene(scene)?;
            let est = pipeline.separate(&input, masks)?;
            let sig = mono(est, scene.mixture.sample_rate())?;
            write_wav(a.out.join(format!("{}_{label}.wav", entry.id)), &sig, WavFormat::Float32)?;
            score(
                &entry.id,
                &label,
                &sig.channel_vec(0),
                &scene.target_reference(),
                entry.target_doa_deg,
                entry.interferer_doa_deg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    write_report(&a.out, &records)
}

pub fn beampattern(a: &BeampatternArgs) -> Result<()> {
    let method: OracleMethod = a.method.parse()?;
    let cfg: OracleConfig = load_config(a.config.as_deref())?;
    let scene = match &a.data {
        Some(manifest) => {
            let (entries, base, geometry) = load_manifest(manifest)?;
            let entry = entries.get(a.scene).ok_or_else(|| {
                Error::Config(format!("scene index {} out of range ({} scenes)", a.scene, entries.len()))
            })?;
            load_scene(entry, &base, &geometry)?
        }
        None => simulate_from_spec(
            &SceneSpec {
                target_doa: a.target_doa,
                interferer_doa: a.interferer_doa,
                sir_db: 0.0,
                seed: a.seed,
                duration_s: a.duration,
            },
            &ArrayGeometry::default_linear8(),
        )?,
    };
    let thetas: Vec<f64> = (0..=180).map(f64::from).collect();
    let gains = match oracle_weights(&scene, method, &cfg)? {
        OracleWeights::Fd(w) => fd_beam_pattern(
            &w,
            a.frame.unwrap_or(0),
            &scene.geometry,
            &a.freqs,
            &thetas,
            scene.mixture.sample_rate(),
        )?,
        OracleWeights::Td(w) => td_beam_pattern(&w, a.frame, &scene.geometry, &a.freqs, &thetas)?,
    };
    create_dir(&a.out)?;
    let path = a.out.join("pattern.csv");
    write_text(&path, &pattern_csv(&thetas, &a.freqs, &gains))?;
    for (fi, f) in a.freqs.iter().enumerate() {
        let col = gains.index_axis(Axis(1), fi);
        let (imin, _) = col
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &g)| if g < acc.1 { (i, g) } else { acc });
        println!("{f:>8} Hz  minimum at {:>5.1} deg", thetas[imin]);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn estimate_files(dir: &Path, id: &str) -> Result<Vec<(String, PathBuf)>> {
    let prefix = format!("{id}_");
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(method) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".wav")) {
            out.push((method.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (entries, base, geometry) = load_manifest(&a.data)?;
    let records = entries
        .par_iter()
        .map(|entry| {
            let target = read_wav(base.join(&entry.target_path))?.channel_vec(geometry.reference);
            let files = if a.methods.is_empty() {
                estimate_files(&a.estimates, &entry.id)?
            } else {
                a.methods
                    .iter()
                    .map(|m| (m.clone(), a.estimates.join(format!("{}_{m}.wav", entry.id))))
                    .collect()
            };
            files
                .into_iter()
                .map(|(method, path)| {
                    let est = read_wav(&path)?;
                    let ch = if est.channels() == geometry.channels() { geometry.reference } else { 0 };
                    score(
                        &entry.id,
                        &method,
                        &est.channel_vec(ch),
                        &target,
                        entry.target_doa_deg,
                        entry.interferer_doa_deg,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    if records.is_empty() {
        return Err(Error::Config(format!(
            "no estimates named <scene id>_<method>.wav in {}",
            a.estimates.display()
        )));
    }
    create_dir(&a.out)?;
    write_report(&a.out, &records)
}
