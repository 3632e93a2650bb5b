use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{Gru, Linear};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Which pair of second-order statistics a beamforming head consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadStatistics {
    /// Target and interference covariances.
    Mvdr,
    /// Mixture covariance and mixture-target cross-covariance.
    Mcwf,
}

/// Layer widths read back from the parameter shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadDims {
    pub input: usize,
    pub projection: usize,
    pub gru: Vec<usize>,
    pub output: usize,
}

/// Projection, stacked GRUs and an output projection, applied along the
/// time axis of a `[B, T, input]` tensor.
#[derive(Debug, Clone)]
pub struct RecurrentHead {
    projection: Linear,
    grus: Vec<Gru>,
    output: Linear,
}

impl RecurrentHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        projection: usize,
        gru: usize,
        layers: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let proj = Linear::new(store, &format!("{name}.projection"), input, projection, rng);
        let grus = (0..layers)
            .map(|l| {
                let width = if l == 0 { projection } else { gru };
                Gru::new(store, &format!("{name}.gru{l}"), width, gru, rng)
            })
            .collect();
        let out = Linear::new(store, &format!("{name}.output"), gru, output, rng);
        Self {
            projection: proj,
            grus,
            output: out,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = self.projection.forward(g, store, x)?;
        for gru in &self.grus {
            h = gru.forward(g, store, h)?;
        }
        self.output.forward(g, store, h)
    }

    pub fn dims(&self, store: &ParamStore) -> HeadDims {
        let shape = |id| store.value(id).shape().to_vec();
        let p = shape(self.projection.weight);
        let o = shape(self.output.weight);
        HeadDims {
            input: p[0],
            projection: p[1],
            gru: self.grus.iter().map(|g| shape(g.w_hh)[0]).collect(),
            output: o[1],
        }
    }
}

/// Frequency-domain head: per-frequency recurrence over frames, with the
/// frequency axis folded into the batch so the weights are shared across
/// frequencies. Input `[F, T, 4M²]`, output `[F, T, 2M]` (real parts, then
/// imaginary parts of the weights).
#[derive(Debug, Clone)]
pub struct FdHead {
    pub net: RecurrentHead,
    pub channels: usize,
    pub statistics: HeadStatistics,
}

impl FdHead {
    pub fn new(
        store: &mut ParamStore,
        channels: usize,
        statistics: HeadStatistics,
        projection: usize,
        gru: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let m2 = channels * channels;
        Self {
            net: RecurrentHead::new(store, "head", 4 * m2, projection, gru, 2, 2 * channels, rng),
            channels,
            statistics,
        }
    }

    pub fn input_width(&self) -> usize {
        4 * self.channels * self.channels
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, stats: Var) -> Result<Var> {
        let s = g.shape(stats);
        if s.len() != 3 || s[2] != self.input_width() {
            return Err(Error::shape("fd head input", ("F", "T", self.input_width()), s));
        }
        self.net.forward(g, store, stats)
    }
}

/// Which statistics feed the time-domain head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdHeadInput {
    /// Two M×M matrices per sample: `2NM²` per frame.
    PairOfMatrices,
    /// Mixture covariance plus the cross-covariance with the reference
    /// target estimate only: `NM² + NM` per frame.
    MatrixAndVector,
}

/// Time-domain head: recurrence over frames of flattened per-sample
/// statistics. Input `[1, T, width]`, output `[1, T, N·M]`.
#[derive(Debug, Clone)]
pub struct TdHead {
    pub net: RecurrentHead,
    pub channels: usize,
    pub window: usize,
    pub input: TdHeadInput,
}

impl TdHead {
    pub fn new(
        store: &mut ParamStore,
        channels: usize,
        window: usize,
        input: TdHeadInput,
        projection: usize,
        gru: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let width = Self::width_for(channels, window, input);
        Self {
            net: RecurrentHead::new(store, "head", width, projection, gru, 2, window * channels, rng),
            channels,
            window,
            input,
        }
    }

    fn width_for(m: usize, n: usize, input: TdHeadInput) -> usize {
        match input {
            TdHeadInput::PairOfMatrices => 2 * n * m * m,
            TdHeadInput::MatrixAndVector => n * m * m + n * m,
        }
    }

    pub fn input_width(&self) -> usize {
        Self::width_for(self.channels, self.window, self.input)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, stats: Var) -> Result<Var> {
        let s = g.shape(stats);
        if s.len() != 3 || s[2] != self.input_width() {
            return Err(Error::shape("td head input", (1, "T", self.input_width()), s));
        }
        self.net.forward(g, store, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use rand::SeedableRng;

    #[test]
    fn fd_head_shares_weights_across_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let head = FdHead::new(&mut store, 2, HeadStatistics::Mvdr, 6, 5, &mut rng);
        let count = store.numel();
        for f in [3, 17] {
            let mut g = Graph::new();
            let x = g.constant(Tensor::zeros(vec![f, 4, 16]));
            let y = head.forward(&mut g, &store, x).unwrap();
            assert_eq!(g.shape(y), &[f, 4, 4]);
            assert!(g.value(y).iter().all(|v| v.is_finite()));
        }
        assert_eq!(store.numel(), count);
    }

    #[test]
    fn zero_statistics_give_bias_driven_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let head = TdHead::new(&mut store, 8, 40, TdHeadInput::PairOfMatrices, 32, 256, &mut rng);
        let run = || {
            let mut g = Graph::new();
            let x = g.constant(Tensor::zeros(vec![1, 10, head.input_width()]));
            let y = head.forward(&mut g, &store, x).unwrap();
            assert_eq!(g.shape(y), &[1, 10, 320]);
            g.value(y).clone()
        };
        let a = run();
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, run());
    }
}
