use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Padding, Var};
use super::layers::{Conv1d, GlobalLayerNorm, Prelu};
use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub bottleneck: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub blocks: usize,
    pub repeats: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            bottleneck: 64,
            hidden: 128,
            kernel: 3,
            blocks: 4,
            repeats: 2,
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    expand: Conv1d,
    act1: Prelu,
    norm1: GlobalLayerNorm,
    depthwise: Conv1d,
    act2: Prelu,
    norm2: GlobalLayerNorm,
    project: Conv1d,
}

/// Stack of residual dilated depthwise-separable convolution blocks over a
/// `[C, T]` feature map. Block `b` of every repeat uses dilation `2^b`.
#[derive(Debug, Clone)]
pub struct Tcn {
    input_norm: GlobalLayerNorm,
    bottleneck: Conv1d,
    blocks: Vec<Block>,
    out_act: Prelu,
    output: Conv1d,
    pub input: usize,
    pub outputs: usize,
}

impl Tcn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        outputs: usize,
        cfg: &TcnConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let input_norm = GlobalLayerNorm::new(store, &format!("{name}.in_norm"), input);
        let bottleneck = Conv1d::pointwise(store, &format!("{name}.bottleneck"), input, cfg.bottleneck, rng);
        let mut blocks = Vec::new();
        for r in 0..cfg.repeats {
            for b in 0..cfg.blocks {
                let p = format!("{name}.r{r}b{b}");
                blocks.push(Block {
                    expand: Conv1d::pointwise(store, &format!("{p}.expand"), cfg.bottleneck, cfg.hidden, rng),
                    act1: Prelu::new(store, &format!("{p}.act1")),
                    norm1: GlobalLayerNorm::new(store, &format!("{p}.norm1"), cfg.hidden),
                    depthwise: Conv1d::new(
                        store,
                        &format!("{p}.depthwise"),
                        cfg.hidden,
                        cfg.hidden,
                        cfg.kernel,
                        1 << b,
                        cfg.hidden,
                        Padding::Same,
                        rng,
                    ),
                    act2: Prelu::new(store, &format!("{p}.act2")),
                    norm2: GlobalLayerNorm::new(store, &format!("{p}.norm2"), cfg.hidden),
                    project: Conv1d::pointwise(store, &format!("{p}.project"), cfg.hidden, cfg.bottleneck, rng),
                });
            }
        }
        let out_act = Prelu::new(store, &format!("{name}.out_act"));
        let output = Conv1d::pointwise(store, &format!("{name}.output"), cfg.bottleneck, outputs, rng);
        Self {
            input_norm,
            bottleneck,
            blocks,
            out_act,
            output,
            input,
            outputs,
        }
    }

    /// `[input, T]` to `[outputs, T]`, no output nonlinearity.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let x = self.input_norm.forward(g, store, x)?;
        let mut h = self.bottleneck.forward(g, store, x)?;
        for b in &self.blocks {
            let y = b.expand.forward(g, store, h)?;
            let y = b.act1.forward(g, store, y)?;
            let y = b.norm1.forward(g, store, y)?;
            let y = b.depthwise.forward(g, store, y)?;
            let y = b.act2.forward(g, store, y)?;
            let y = b.norm2.forward(g, store, y)?;
            let y = b.project.forward(g, store, y)?;
            h = g.add(h, y)?;
        }
        let h = self.out_act.forward(g, store, h)?;
        self.output.forward(g, store, h)
    }
}
