use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Padding, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

pub const GLN_EPS: f64 = 1e-8;

/// `y = x W + b` over the last axis; `W` is `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[input, output], bound, rng),
            bias: store.add_uniform(format!("{name}.bias"), &[output], bound, rng),
            input,
            output,
        }
    }

    /// Accepts `[.., in]` with rank 2 or 3.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let shape = g.shape(x).to_vec();
        let y = match shape.len() {
            1 => {
                let x2 = g.reshape(x, &[1, shape[0]])?;
                let y = g.matmul(x2, w)?;
                g.reshape(y, &[self.output])?
            }
            2 | 3 => g.matmul(x, w)?,
            _ => return Err(Error::shape("linear input rank", "1..=3", shape)),
        };
        g.add(y, b)
    }
}

/// Grouped dilated convolution over `[C, L]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub dilation: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        dilation: usize,
        groups: usize,
        padding: Padding,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = input / groups * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[output, input / groups, kernel], bound, rng),
            bias: store.add_uniform(format!("{name}.bias"), &[output], bound, rng),
            dilation,
            groups,
            padding,
        }
    }

    pub fn pointwise(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(store, name, input, output, 1, 1, 1, Padding::Same, rng)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv1d(x, w, Some(b), self.dilation, self.groups, self.padding)
    }
}

/// Parametric ReLU with a single learnable slope.
#[derive(Debug, Clone)]
pub struct Prelu {
    pub alpha: ParamId,
}

impl Prelu {
    pub fn new(store: &mut ParamStore, name: &str) -> Self {
        Self {
            alpha: store.add_const(format!("{name}.alpha"), &[1], 0.25),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = g.param(store, self.alpha);
        g.prelu(x, a)
    }
}

/// Global layer normalization of a `[C, L]` map: statistics over all
/// entries, per-channel gain and bias.
#[derive(Debug, Clone)]
pub struct GlobalLayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl GlobalLayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add_const(format!("{name}.gamma"), &[channels, 1], 1.0),
            beta: store.add_const(format!("{name}.beta"), &[channels, 1], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let normed = layer_norm(g, x)?;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let y = g.mul(normed, gamma)?;
        g.add(y, beta)
    }
}

/// `(x − mean) / sqrt(var + ε)` with statistics over every entry.
pub fn layer_norm(g: &mut Graph, x: Var) -> Result<Var> {
    let mean = g.mean(x);
    let centred = g.sub(x, mean)?;
    let sq = g.mul(centred, centred)?;
    let var = g.mean(sq);
    let var = g.add_scalar(var, GLN_EPS);
    let std = g.sqrt(var);
    g.div(centred, std)
}

/// Gated recurrent unit over `[B, T, in]`, zero initial state.
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: store.add_uniform(format!("{name}.w_ih"), &[input, 3 * hidden], bound, rng),
            w_hh: store.add_uniform(format!("{name}.w_hh"), &[hidden, 3 * hidden], bound, rng),
            b_ih: store.add_uniform(format!("{name}.b_ih"), &[3 * hidden], bound, rng),
            b_hh: store.add_uniform(format!("{name}.b_hh"), &[3 * hidden], bound, rng),
            input,
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.input {
            return Err(Error::shape("gru input", ("B", "T", self.input), shape));
        }
        let w_ih = g.param(store, self.w_ih);
        let b_ih = g.param(store, self.b_ih);
        let xp = g.matmul(x, w_ih)?;
        let xp = g.add(xp, b_ih)?;
        let w_hh = g.param(store, self.w_hh);
        let b_hh = g.param(store, self.b_hh);
        g.gru_sequence(xp, w_hh, b_hh)
    }

    /// Same recurrence unrolled into per-step [`gru_cell`] nodes.
    pub fn forward_unrolled(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.input {
            return Err(Error::shape("gru input", ("B", "T", self.input), shape));
        }
        let (b, t) = (shape[0], shape[1]);
        let w_ih = g.param(store, self.w_ih);
        let b_ih = g.param(store, self.b_ih);
        let xp = g.matmul(x, w_ih)?;
        let xp = g.add(xp, b_ih)?;
        let w_hh = g.param(store, self.w_hh);
        let b_hh = g.param(store, self.b_hh);
        let mut h = g.constant(super::graph::Tensor::zeros(vec![b, self.hidden]));
        let mut outputs = Vec::with_capacity(t);
        for step in 0..t {
            let xt = g.slice(xp, 1, step, step + 1)?;
            let xt = g.reshape(xt, &[b, 3 * self.hidden])?;
            h = gru_cell(g, xt, h, w_hh, b_hh, self.hidden)?;
            outputs.push(g.reshape(h, &[b, 1, self.hidden])?);
        }
        g.concat(&outputs, 1)
    }
}

/// One recurrent step from the projected input `xp` (`[B, 3H]`, input bias
/// included) and the previous state `h` (`[B, H]`). Gate order r, z, n.
pub fn gru_cell(g: &mut Graph, xp: Var, h: Var, w_hh: Var, b_hh: Var, hidden: usize) -> Result<Var> {
    let hh = hidden;
    let hp = g.matmul(h, w_hh)?;
    let hp = g.add(hp, b_hh)?;
    let xr = g.slice(xp, 1, 0, hh)?;
    let xz = g.slice(xp, 1, hh, 2 * hh)?;
    let xn = g.slice(xp, 1, 2 * hh, 3 * hh)?;
    let hr = g.slice(hp, 1, 0, hh)?;
    let hz = g.slice(hp, 1, hh, 2 * hh)?;
    let hn = g.slice(hp, 1, 2 * hh, 3 * hh)?;
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r);
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z);
    let rn = g.mul(r, hn)?;
    let n = g.add(xn, rn)?;
    let n = g.tanh(n);
    // (1 − z) n + z h
    let d = g.sub(h, n)?;
    let zd = g.mul(z, d)?;
    g.add(n, zd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Tensor;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fused_gru_matches_unrolled_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "gru", 5, 7, &mut rng);
        let x = Tensor::from_shape_fn(vec![2, 9, 5], |_| rng.gen_range(-1.0..1.0));
        let run = |fused: bool| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = if fused {
                gru.forward(&mut g, &store, xv).unwrap()
            } else {
                gru.forward_unrolled(&mut g, &store, xv).unwrap()
            };
            let sq = g.mul(y, y).unwrap();
            let loss = g.sum(sq);
            let grads = g.backward(loss).unwrap();
            (g.value(y).clone(), g.param_gradients(&grads))
        };
        let (yf, gf) = run(true);
        let (yu, gu) = run(false);
        assert!((&yf - &yu).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(gf.len(), 4);
        for ((ia, a), (ib, b)) in gf.iter().zip(&gu) {
            assert_eq!(ia, ib);
            assert!((a - b).iter().all(|d| d.abs() < 1e-10), "{}", store.name(*ia));
        }
    }
}
