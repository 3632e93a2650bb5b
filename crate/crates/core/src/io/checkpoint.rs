use std::path::Path;

use ndarray::{Array2, ArrayD, Axis};
use serde::{Deserialize, Serialize};

use super::container::TensorContainer;
use crate::error::{Error, Result};
use crate::features::LearnableFilterBank;
use crate::nn::{Pipeline, PipelineConfig};
use crate::scene::ArrayGeometry;

const CHECKPOINT_KIND: &str = "beamkit-checkpoint";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    config: PipelineConfig,
    config_hash: String,
    geometry: ArrayGeometry,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Parameters by name, with the configuration, its hash and the geometry as
/// metadata. `extra` is stored verbatim (loss trace, epochs, ...).
pub fn checkpoint_container(pipeline: &Pipeline, extra: serde_json::Value) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    for (name, value) in pipeline.store.entries() {
        c.insert(name, value.clone())?;
    }
    let meta = CheckpointMeta {
        kind: CHECKPOINT_KIND.into(),
        config: pipeline.config.clone(),
        config_hash: pipeline.config.hash(),
        geometry: pipeline.geometry().clone(),
        extra,
    };
    c.metadata = Some(serde_json::to_value(meta).map_err(|e| Error::Container(e.to_string()))?);
    Ok(c)
}

pub fn save_checkpoint(path: &Path, pipeline: &Pipeline, extra: serde_json::Value) -> Result<()> {
    checkpoint_container(pipeline, extra)?.save(path)
}

/// Rebuilds the pipeline a container was written from. Fails if the stored
/// hash does not match the stored configuration or a parameter is missing
/// or misshapen.
pub fn pipeline_from_container(c: TensorContainer) -> Result<(Pipeline, serde_json::Value)> {
    let meta = c
        .metadata
        .clone()
        .ok_or_else(|| Error::Container("checkpoint has no metadata".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_value(meta).map_err(|e| Error::Container(format!("checkpoint metadata: {e}")))?;
    if meta.kind != CHECKPOINT_KIND {
        return Err(Error::Container(format!("not a checkpoint (kind '{}')", meta.kind)));
    }
    let hash = meta.config.hash();
    if hash != meta.config_hash {
        return Err(Error::Container(format!(
            "config hash mismatch: stored {}, computed {hash}",
            meta.config_hash
        )));
    }
    let mut pipeline = Pipeline::new(meta.config, meta.geometry)?;
    let mut values = Vec::with_capacity(c.len());
    for (name, data) in c.into_entries() {
        let dtype = data.dtype();
        match data {
            super::container::TensorData::F64(a) => values.push((name, a)),
            _ => return Err(Error::Container(format!("parameter '{name}' is {dtype:?}, expected f64"))),
        }
    }
    pipeline.store.load(values.iter().map(|(n, v)| (n.as_str(), v.clone())))?;
    Ok((pipeline, meta.extra))
}

pub fn load_checkpoint(path: &Path) -> Result<(Pipeline, serde_json::Value)> {
    pipeline_from_container(TensorContainer::load(path)?)
}

/// Analysis filters and synthesis matrix as entries `K0`, `w_1` .. `w_M`
/// and `decoder`.
pub fn bank_container(bank: &LearnableFilterBank, decoder: &Array2<f64>) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    c.insert("K0", bank.k0().to_owned().into_dyn())?;
    for (m, w) in bank.windows().axis_iter(Axis(0)).enumerate() {
        c.insert(format!("w_{}", m + 1), w.to_owned().into_dyn())?;
    }
    c.insert("decoder", decoder.clone().into_dyn())?;
    Ok(c)
}

pub fn bank_from_container(c: &TensorContainer, reference: usize) -> Result<(LearnableFilterBank, Array2<f64>)> {
    let get2 = |name: &str| -> Result<Array2<f64>> {
        let a: &ArrayD<f64> = c
            .get(name)
            .and_then(|d| d.as_f64())
            .ok_or_else(|| Error::Container(format!("missing f64 entry '{name}'")))?;
        a.clone()
            .into_dimensionality()
            .map_err(|_| Error::Container(format!("'{name}' must be 2-D")))
    };
    let k0 = get2("K0")?;
    let mut rows = Vec::new();
    while let Some(w) = c.get(&format!("w_{}", rows.len() + 1)) {
        let w = w
            .as_f64()
            .filter(|w| w.ndim() == 1)
            .ok_or_else(|| Error::Container(format!("'w_{}' must be a 1-D f64 vector", rows.len() + 1)))?;
        rows.push(w.view().into_dimensionality::<ndarray::Ix1>().expect("1-D").to_owned());
    }
    if rows.is_empty() {
        return Err(Error::Container("no window entries w_1..".into()));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
    let windows = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Container(format!("windows: {e}")))?;
    let bank = LearnableFilterBank::new(k0, windows, reference)?;
    Ok((bank, get2("decoder")?))
}
