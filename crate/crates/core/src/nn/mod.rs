//! Reverse-mode autodiff and the trainable separation models built on it.

mod config;
mod gradcheck;
mod graph;
mod heads;
mod layers;
mod loss;
mod optim;
mod params;
mod pipeline;
mod tcn;
mod train;

pub use config::{
    BeamformerVariant, Domain, EncoderConfig, HeadConfig, LossWeights, OptimConfig, PipelineConfig,
};
pub use gradcheck::{max_relative_error, param_gradient_errors, primitive_checks};
pub use graph::{Gradients, Graph, Padding, Tensor, Var};
pub use heads::{FdHead, HeadDims, HeadStatistics, RecurrentHead, TdHead, TdHeadInput};
pub use layers::{gru_cell, layer_norm, Conv1d, GlobalLayerNorm, Gru, Linear, Prelu, GLN_EPS};
pub use loss::{dft_basis, lmfb_loss, log_mel, mel_filterbank, si_sdr_loss, stft_graph, MEL_FLOOR};
pub use optim::{Adam, PlateauScheduler};
pub use params::{ParamId, ParamStore};
pub use pipeline::{complex_mul, ForwardOutput, MaskSource, Pipeline, PreparedInput};
pub use tcn::{Tcn, TcnConfig};
pub use train::{EpochRecord, TrainReport, Trainer};
