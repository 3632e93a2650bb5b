use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::optim::{Adam, PlateauScheduler};
use super::params::ParamId;
use super::pipeline::{MaskSource, Pipeline, PreparedInput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every update step, before the update.
    pub step_losses: Vec<f64>,
    /// Set when training stopped on a non-finite loss or gradient; the
    /// parameters are those of the last finite step.
    pub aborted: Option<String>,
}

/// Adam updates of a pipeline, one utterance per step.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub pipeline: Pipeline,
    pub masks: MaskSource,
    adam: Adam,
    scheduler: PlateauScheduler,
    trainable: Option<Vec<ParamId>>,
}

impl Trainer {
    pub fn new(pipeline: Pipeline) -> Self {
        let o = pipeline.config.optim;
        Self {
            adam: Adam::new(o.learning_rate),
            scheduler: PlateauScheduler::new(o.patience, o.decay),
            pipeline,
            masks: MaskSource::Estimator,
            trainable: None,
        }
    }

    /// Restricts updates to `ids`.
    pub fn only(mut self, ids: Vec<ParamId>) -> Self {
        self.trainable = Some(ids);
        self
    }

    pub fn with_masks(mut self, masks: MaskSource) -> Self {
        self.masks = masks;
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.adam.learning_rate
    }

    pub fn evaluate(&self, input: &PreparedInput) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.pipeline.forward(&mut g, input, self.masks)?;
        let loss = self.pipeline.loss(&mut g, input, &out)?;
        Ok(g.scalar(loss))
    }

    /// One update. A non-finite loss or gradient leaves the parameters
    /// untouched and is reported as [`Error::NonFinite`].
    pub fn step(&mut self, input: &PreparedInput) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.pipeline.forward(&mut g, input, self.masks)?;
        let loss = self.pipeline.loss(&mut g, input, &out)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        let grads = g.backward(loss)?;
        let mut pg = g.param_gradients(&grads);
        if let Some(ids) = &self.trainable {
            pg.retain(|(id, _)| ids.contains(id));
        }
        if let Some((id, _)) = pg.iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!(
                "gradient of {}",
                self.pipeline.store.name(*id)
            )));
        }
        self.adam.update(&mut self.pipeline.store, &pg);
        Ok(value)
    }

    /// `epochs` passes over `train` in a seeded order, validation after
    /// each, learning rate reduced on a validation (or training) plateau.
    pub fn fit(&mut self, train: &[PreparedInput], validation: &[PreparedInput], epochs: usize) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Config("no training utterances".into()));
        }
        let mut report = TrainReport::default();
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.pipeline.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                match self.step(&train[i]) {
                    Ok(l) => {
                        total += l;
                        report.step_losses.push(l);
                    }
                    Err(e @ Error::NonFinite(_)) => {
                        report.aborted = Some(e.to_string());
                        return Ok(report);
                    }
                    Err(e) => return Err(e),
                }
            }
            let train_loss = total / train.len() as f64;
            let validation_loss = if validation.is_empty() {
                None
            } else {
                let mut sum = 0.0;
                for v in validation {
                    sum += self.evaluate(v)?;
                }
                Some(sum / validation.len() as f64)
            };
            let lr = self.adam.learning_rate;
            report.epochs.push(EpochRecord {
                epoch,
                train_loss,
                validation_loss,
                learning_rate: lr,
            });
            self.adam.learning_rate = self.scheduler.observe(validation_loss.unwrap_or(train_loss), lr);
        }
        Ok(report)
    }
}
