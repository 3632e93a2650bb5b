//! Tape-based reverse-mode automatic differentiation over `f64` arrays.
//!
//! A [`Graph`] records every operation applied to [`Var`] handles; one call
//! to [`Graph::backward`] walks the tape in reverse. Elementwise binary ops
//! broadcast like numpy.

use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Array3, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Slice};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::metrics::{si_sdr, SI_SDR_CAP_DB};

pub type Tensor = ArrayD<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output sample `l` sees inputs up to `l` only.
    Causal,
    /// Centred receptive field; output length equals input length.
    Same,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Relu(Var),
    Prelu(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Sqrt(Var),
    Log10(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Slice(Var, usize, usize, usize),
    Concat(Vec<Var>, usize),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dilation: usize,
        groups: usize,
        left: usize,
    },
    Frame(Var, usize),
    OverlapAdd(Var, usize),
    SiSdr(Var, Vec<f64>),
    GruSequence(Box<GruTrace>),
}

/// Saved activations of a fused GRU pass, each `[T, B, H]`.
#[derive(Debug, Clone)]
struct GruTrace {
    xp: Var,
    w_hh: Var,
    b_hh: Var,
    r: Array3<f64>,
    z: Array3<f64>,
    n: Array3<f64>,
    hn: Array3<f64>,
    h_prev: Array3<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of a scalar with respect to every node of the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(ctx: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::shape(ctx, a.to_vec(), b.to_vec())
}

fn broadcast_shape(a: &[usize], b: &[usize], ctx: &'static str) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(shape_err(ctx, a, b));
        };
    }
    Ok(out)
}

/// Sums `grad` down to `shape` (the inverse of broadcasting).
fn unbroadcast(grad: Tensor, shape: &[usize]) -> Tensor {
    let mut g = grad;
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (i, &d) in shape.iter().enumerate() {
        if d == 1 && g.shape()[i] != 1 {
            g = g.sum_axis(Axis(i)).insert_axis(Axis(i));
        }
    }
    g
}

fn as2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("rank 2")
}

fn to_dyn(a: Array2<f64>) -> Tensor {
    a.into_dyn()
}

fn standard(t: Tensor) -> Tensor {
    if t.is_standard_layout() {
        t
    } else {
        t.as_standard_layout().into_owned()
    }
}

fn reshape(t: &Tensor, shape: &[usize]) -> Tensor {
    standard(t.clone())
        .into_shape_with_order(IxDyn(shape))
        .expect("element count checked")
}

/// Zero-pads `x` ([C, L]) by `left` and `right` samples.
fn pad_time(x: &Tensor, left: usize, right: usize) -> Array2<f64> {
    let x = as2(x);
    let (c, l) = x.dim();
    let mut out = Array2::zeros((c, l + left + right));
    out.slice_mut(s![.., left..left + l]).assign(&x);
    out
}

fn im2col(xp: ArrayView2<f64>, chans: std::ops::Range<usize>, k: usize, dil: usize, len: usize) -> Array2<f64> {
    let cg = chans.len();
    let mut cols = Array2::zeros((cg * k, len));
    for (ci, c) in chans.enumerate() {
        for kk in 0..k {
            let off = kk * dil;
            cols.row_mut(ci * k + kk)
                .assign(&xp.slice(s![c, off..off + len]));
        }
    }
    cols
}

fn frame_forward(x: &Tensor, hop: usize, window: usize) -> Tensor {
    let x = as2(x);
    let (c, l) = x.dim();
    let t = if l < window { 0 } else { (l - window) / hop + 1 };
    let mut out = ndarray::Array3::zeros((c, t, window));
    for ci in 0..c {
        for ti in 0..t {
            out.slice_mut(s![ci, ti, ..])
                .assign(&x.slice(s![ci, ti * hop..ti * hop + window]));
        }
    }
    out.into_dyn()
}

fn ola_forward(x: &Tensor, hop: usize, len: Option<usize>) -> Tensor {
    let x = x.view().into_dimensionality::<ndarray::Ix3>().expect("rank 3");
    let (c, t, n) = x.dim();
    let natural = if t == 0 { 0 } else { (t - 1) * hop + n };
    let l = len.unwrap_or(natural);
    let mut out = Array2::zeros((c, l));
    for ci in 0..c {
        for ti in 0..t {
            let start = ti * hop;
            let mut dst = out.slice_mut(s![ci, start..start + n]);
            dst += &x.slice(s![ci, ti, ..]);
        }
    }
    out.into_dyn()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        *self.value(v).iter().next().expect("non-empty")
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a trainable parameter; repeated calls return the same
    /// node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    fn binary(&mut self, a: Var, b: Var, ctx: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(va.shape(), vb.shape(), ctx)?;
        let ba = va.broadcast(IxDyn(&shape)).expect("checked");
        let bb = vb.broadcast(IxDyn(&shape)).expect("checked");
        let mut out = Tensor::zeros(IxDyn(&shape));
        ndarray::Zip::from(&mut out)
            .and(&ba)
            .and(&bb)
            .for_each(|o, &x, &y| *o = f(x, y));
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::AddScalar(a))
    }

    /// `[m,k]·[k,n]`, `[b,m,k]·[b,k,n]` or `[b,m,k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        let out = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => to_dyn(as2(va).dot(&as2(vb))),
            (3, 2) if sa[2] == sb[0] => {
                let flat = reshape(va, &[sa[0] * sa[1], sa[2]]);
                let y = as2(&flat).dot(&as2(vb));
                reshape(&y.into_dyn(), &[sa[0], sa[1], sb[1]])
            }
            (3, 3) if sa[0] == sb[0] && sa[2] == sb[1] => {
                let mut out = ndarray::Array3::zeros((sa[0], sa[1], sb[2]));
                for i in 0..sa[0] {
                    let x = va.index_axis(Axis(0), i).into_dimensionality::<Ix2>().expect("rank 2");
                    let y = vb.index_axis(Axis(0), i).into_dimensionality::<Ix2>().expect("rank 2");
                    out.index_axis_mut(Axis(0), i).assign(&x.dot(&y));
                }
                out.into_dyn()
            }
            _ => return Err(shape_err("matmul", &sa, &sb)),
        };
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a).mapv(f);
        self.push(v, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// `x` for positive inputs, `alpha · x` otherwise; `alpha` broadcasts.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        self.binary(x, alpha, "prelu", Op::Prelu(x, alpha), |x, a| if x > 0.0 { x } else { a * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// Square root with zero gradient at zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn log10(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log10(a), f64::log10)
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::from_elem(IxDyn(&[]), x.sum() / x.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Sum over one axis (removed from the shape).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() {
            return Err(shape_err("sum_axis", x.shape(), &[axis]));
        }
        let v = x.sum_axis(Axis(axis));
        Ok(self.push(v, Op::SumAxis(a, axis)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if x.len() != shape.iter().product::<usize>() {
            return Err(shape_err("reshape", x.shape(), shape));
        }
        let v = reshape(x, shape);
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let mut seen = vec![false; x.ndim()];
        if axes.len() != x.ndim() || axes.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(shape_err("permute", x.shape(), axes));
        }
        let v = standard(x.clone().permuted_axes(IxDyn(axes)));
        Ok(self.push(v, Op::Permute(a, axes.to_vec())))
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() || start > end || end > x.shape()[axis] {
            return Err(shape_err("slice", x.shape(), &[axis, start, end]));
        }
        let v = x.slice_axis(Axis(axis), Slice::from(start..end)).to_owned();
        Ok(self.push(v, Op::Slice(a, axis, start, end)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(axis), &views).map_err(|_| {
            Error::shape(
                "concat",
                format!("{:?}", views.first().map(|v| v.shape().to_vec())),
                format!("{} parts on axis {axis}", parts.len()),
            )
        })?;
        Ok(self.push(v, Op::Concat(parts.to_vec(), axis)))
    }

    /// Grouped dilated 1-D convolution of `[C_in, L]` with weights
    /// `[C_out, C_in/groups, K]` and optional bias `[C_out]`; output `[C_out, L]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dilation: usize,
        groups: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(input).to_vec(), self.shape(weight).to_vec());
        if xs.len() != 2 || ws.len() != 3 || groups == 0 || xs[0] % groups != 0 || ws[0] % groups != 0 || ws[1] * groups != xs[0] {
            return Err(shape_err("conv1d", &xs, &ws));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("conv1d bias", &[ws[0]], self.shape(b)));
            }
        }
        let (cin, len) = (xs[0], xs[1]);
        let (cout, k) = (ws[0], ws[2]);
        let total = (k - 1) * dilation;
        let left = match padding {
            Padding::Causal => total,
            Padding::Same => total / 2,
        };
        let xp = pad_time(self.value(input), left, total - left);
        let w = self.value(weight);
        let (cig, cog) = (cin / groups, cout / groups);
        let mut out = Array2::zeros((cout, len));
        for g in 0..groups {
            let cols = im2col(xp.view(), g * cig..(g + 1) * cig, k, dilation, len);
            let wg = reshape(&w.slice_axis(Axis(0), Slice::from(g * cog..(g + 1) * cog)).to_owned(), &[cog, cig * k]);
            out.slice_mut(s![g * cog..(g + 1) * cog, ..]).assign(&as2(&wg).dot(&cols));
        }
        if let Some(b) = bias {
            let bv = self.value(b);
            for (mut row, &bb) in out.rows_mut().into_iter().zip(bv.iter()) {
                row += bb;
            }
        }
        Ok(self.push(
            out.into_dyn(),
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
                groups,
                left,
            },
        ))
    }

    /// `[C, L]` to `[C, T, window]` frames with the given hop.
    pub fn frame(&mut self, a: Var, hop: usize, window: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 || s[1] < window || hop == 0 {
            return Err(shape_err("frame", s, &[hop, window]));
        }
        let v = frame_forward(self.value(a), hop, window);
        Ok(self.push(v, Op::Frame(a, hop)))
    }

    /// Plain overlap-add of `[C, T, N]` frames into `[C, (T-1)·hop + N]`.
    pub fn overlap_add(&mut self, a: Var, hop: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 3 || hop == 0 {
            return Err(shape_err("overlap_add", s, &[hop]));
        }
        let v = ola_forward(self.value(a), hop, None);
        Ok(self.push(v, Op::OverlapAdd(a, hop)))
    }

    /// SI-SDR in dB of a flattened estimate against a constant reference.
    /// The value is the metric itself; the gradient vanishes where the value
    /// is clamped.
    pub fn si_sdr(&mut self, estimate: Var, reference: &[f64]) -> Result<Var> {
        let est: Vec<f64> = self.value(estimate).iter().copied().collect();
        let v = si_sdr(&est, reference)?;
        Ok(self.push(
            Tensor::from_elem(IxDyn(&[]), v),
            Op::SiSdr(estimate, reference.to_vec()),
        ))
    }

    /// Whole GRU recurrence from a zero state as one node. `xp` is the
    /// projected input `[B, T, 3H]` (input bias included), `w_hh` is
    /// `[H, 3H]`, `b_hh` is `[3H]`; gate order r, z, n. Output `[B, T, H]`.
    /// Equivalent to chaining [`crate::nn::gru_cell`], with a
    /// backpropagation-through-time rule that batches the weight gradients.
    pub fn gru_sequence(&mut self, xp: Var, w_hh: Var, b_hh: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(xp).to_vec(), self.shape(w_hh).to_vec(), self.shape(b_hh).to_vec());
        if ws.len() != 2 || ws[1] != 3 * ws[0] || xs.len() != 3 || xs[2] != ws[1] || bs != [ws[1]] {
            return Err(Error::shape("gru_sequence", (xs, ws), bs));
        }
        let (b, t, hh) = (xs[0], xs[1], ws[0]);
        let x = self.value(xp).view().into_dimensionality::<ndarray::Ix3>().expect("rank 3");
        let w = as2(self.value(w_hh));
        let bias = self.value(b_hh).view().into_dimensionality::<ndarray::Ix1>().expect("rank 1");
        let mut tr = GruTrace {
            xp,
            w_hh,
            b_hh,
            r: Array3::zeros((t, b, hh)),
            z: Array3::zeros((t, b, hh)),
            n: Array3::zeros((t, b, hh)),
            hn: Array3::zeros((t, b, hh)),
            h_prev: Array3::zeros((t, b, hh)),
        };
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = Array2::<f64>::zeros((b, hh));
        let mut out = Array3::<f64>::zeros((b, t, hh));
        for step in 0..t {
            let hp = h.dot(&w) + bias;
            tr.h_prev.index_axis_mut(Axis(0), step).assign(&h);
            for bi in 0..b {
                for j in 0..hh {
                    let r = sigmoid(x[[bi, step, j]] + hp[[bi, j]]);
                    let z = sigmoid(x[[bi, step, hh + j]] + hp[[bi, hh + j]]);
                    let hn = hp[[bi, 2 * hh + j]];
                    let n = (x[[bi, step, 2 * hh + j]] + r * hn).tanh();
                    let hnew = n + z * (h[[bi, j]] - n);
                    tr.r[[step, bi, j]] = r;
                    tr.z[[step, bi, j]] = z;
                    tr.n[[step, bi, j]] = n;
                    tr.hn[[step, bi, j]] = hn;
                    out[[bi, step, j]] = hnew;
                }
            }
            h = out.index_axis(Axis(1), step).to_owned();
        }
        Ok(self.push(out.into_dyn(), Op::GruSequence(Box::new(tr))))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", 1, self.value(loss).len()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.value(loss).raw_dim()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut acc = |v: Var, d: Tensor| {
                let slot = &mut grads[v.0];
                match slot {
                    Some(e) => *e += &d,
                    None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Add(a, b) => {
                    acc(*a, unbroadcast(g.clone(), self.shape(*a)));
                    acc(*b, unbroadcast(g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    acc(*a, unbroadcast(g.clone(), self.shape(*a)));
                    acc(*b, unbroadcast(-g, self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(*a, unbroadcast(&g * vb, va.shape()));
                    acc(*b, unbroadcast(&g * va, vb.shape()));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(*a, unbroadcast(&g / vb, va.shape()));
                    let db = -(&g * &node.value) / vb;
                    acc(*b, unbroadcast(db, vb.shape()));
                }
                Op::Scale(a, k) => acc(*a, g * *k),
                Op::AddScalar(a) => acc(*a, g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (sa, sb) = (va.shape(), vb.shape());
                    match (sa.len(), sb.len()) {
                        (2, 2) => {
                            acc(*a, to_dyn(as2(&g).dot(&as2(vb).t())));
                            acc(*b, to_dyn(as2(va).t().dot(&as2(&g))));
                        }
                        (3, 2) => {
                            let n = sb[1];
                            let gf = reshape(&g, &[sa[0] * sa[1], n]);
                            let af = reshape(va, &[sa[0] * sa[1], sa[2]]);
                            let da = as2(&gf).dot(&as2(vb).t());
                            acc(*a, reshape(&da.into_dyn(), sa));
                            acc(*b, to_dyn(as2(&af).t().dot(&as2(&gf))));
                        }
                        _ => {
                            let mut da = Tensor::zeros(va.raw_dim());
                            let mut db = Tensor::zeros(vb.raw_dim());
                            for bi in 0..sa[0] {
                                let gi = g.index_axis(Axis(0), bi).into_dimensionality::<Ix2>().expect("rank 2");
                                let x = va.index_axis(Axis(0), bi).into_dimensionality::<Ix2>().expect("rank 2");
                                let y = vb.index_axis(Axis(0), bi).into_dimensionality::<Ix2>().expect("rank 2");
                                da.index_axis_mut(Axis(0), bi).assign(&gi.dot(&y.t()).into_dyn());
                                db.index_axis_mut(Axis(0), bi).assign(&x.t().dot(&gi).into_dyn());
                            }
                            acc(*a, da);
                            acc(*b, db);
                        }
                    }
                }
                Op::Relu(a) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    acc(*a, d);
                }
                Op::Prelu(x, alpha) => {
                    let (vx, va) = (self.value(*x), self.value(*alpha));
                    let shape = g.shape().to_vec();
                    let bx = vx.broadcast(IxDyn(&shape)).expect("forward shape");
                    let ba = va.broadcast(IxDyn(&shape)).expect("forward shape");
                    let mut dx = Tensor::zeros(g.raw_dim());
                    let mut da = Tensor::zeros(g.raw_dim());
                    ndarray::Zip::from(&mut dx)
                        .and(&mut da)
                        .and(&g)
                        .and(&bx)
                        .and(&ba)
                        .for_each(|dx, da, &g, &x, &a| {
                            if x > 0.0 {
                                *dx = g;
                            } else {
                                *dx = g * a;
                                *da = g * x;
                            }
                        });
                    acc(*x, unbroadcast(dx, vx.shape()));
                    acc(*alpha, unbroadcast(da, va.shape()));
                }
                Op::Sigmoid(a) => acc(*a, &g * &node.value.mapv(|s| s * (1.0 - s))),
                Op::Tanh(a) => acc(*a, &g * &node.value.mapv(|t| 1.0 - t * t)),
                Op::Sqrt(a) => acc(*a, &g * &node.value.mapv(|r| if r > 0.0 { 0.5 / r } else { 0.0 })),
                Op::Log10(a) => acc(*a, &g / &(self.value(*a) * std::f64::consts::LN_10)),
                Op::ClampMin(a, floor) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x < *floor { *d = 0.0 });
                    acc(*a, d);
                }
                Op::Sum(a) => {
                    let gs = g.iter().next().copied().unwrap_or(0.0);
                    acc(*a, Tensor::from_elem(self.value(*a).raw_dim(), gs));
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    let gs = g.iter().next().copied().unwrap_or(0.0) / n;
                    acc(*a, Tensor::from_elem(self.value(*a).raw_dim(), gs));
                }
                Op::SumAxis(a, axis) => {
                    let shape = self.shape(*a).to_vec();
                    let d = g.insert_axis(Axis(*axis));
                    acc(*a, d.broadcast(IxDyn(&shape)).expect("sum axis").to_owned());
                }
                Op::Reshape(a) => acc(*a, reshape(&g, self.shape(*a))),
                Op::Permute(a, axes) => {
                    let mut inv = vec![0; axes.len()];
                    for (i, &ax) in axes.iter().enumerate() {
                        inv[ax] = i;
                    }
                    acc(*a, standard(g.permuted_axes(IxDyn(&inv))));
                }
                Op::Slice(a, axis, start, end) => {
                    // Accumulate in place: recurrent loops slice one big tensor
                    // many times.
                    let slot = &mut grads[a.0];
                    let d = slot.get_or_insert_with(|| Tensor::zeros(self.value(*a).raw_dim()));
                    let mut dst = d.slice_axis_mut(Axis(*axis), Slice::from(*start..*end));
                    dst += &g;
                }
                Op::Concat(parts, axis) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p)[*axis];
                        acc(*p, g.slice_axis(Axis(*axis), Slice::from(start..start + w)).to_owned());
                        start += w;
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dilation,
                    groups,
                    left,
                } => {
                    let (xv, wv) = (self.value(*input), self.value(*weight));
                    let (cin, len) = (xv.shape()[0], xv.shape()[1]);
                    let (cout, cig, k) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
                    let total = (k - 1) * dilation;
                    let xp = pad_time(xv, *left, total - left);
                    let g2 = as2(&g);
                    let cog = cout / groups;
                    let mut dxp = Array2::<f64>::zeros(xp.dim());
                    let mut dw = Tensor::zeros(wv.raw_dim());
                    for gi in 0..*groups {
                        let cols = im2col(xp.view(), gi * cig..(gi + 1) * cig, k, *dilation, len);
                        let gg = g2.slice(s![gi * cog..(gi + 1) * cog, ..]);
                        let dwg = gg.dot(&cols.t());
                        dw.slice_axis_mut(Axis(0), Slice::from(gi * cog..(gi + 1) * cog))
                            .assign(&reshape(&dwg.into_dyn(), &[cog, cig, k]));
                        let wg = reshape(&wv.slice_axis(Axis(0), Slice::from(gi * cog..(gi + 1) * cog)).to_owned(), &[cog, cig * k]);
                        let dcols = as2(&wg).t().dot(&gg);
                        for ci in 0..cig {
                            for kk in 0..k {
                                let off = kk * dilation;
                                let mut dst = dxp.slice_mut(s![gi * cig + ci, off..off + len]);
                                dst += &dcols.row(ci * k + kk);
                            }
                        }
                    }
                    let dx = dxp.slice(s![.., *left..*left + len]).to_owned();
                    debug_assert_eq!(dx.nrows(), cin);
                    acc(*input, dx.into_dyn());
                    acc(*weight, dw);
                    if let Some(b) = bias {
                        acc(*b, g.sum_axis(Axis(1)));
                    }
                }
                Op::Frame(a, hop) => {
                    let len = self.shape(*a)[1];
                    acc(*a, ola_forward(&g, *hop, Some(len)));
                }
                Op::OverlapAdd(a, hop) => {
                    let n = self.shape(*a)[2];
                    acc(*a, frame_forward(&g, *hop, n));
                }
                Op::GruSequence(tr) => {
                    let (t, b, hh) = tr.r.dim();
                    let w = as2(self.value(tr.w_hh));
                    let dout = g.view().into_dimensionality::<ndarray::Ix3>().expect("rank 3");
                    let mut dxp = Array3::<f64>::zeros((b, t, 3 * hh));
                    // Rows (step, batch) of the recurrent pre-activation gradient.
                    let mut dhp_all = Array2::<f64>::zeros((t * b, 3 * hh));
                    let mut dh_next = Array2::<f64>::zeros((b, hh));
                    let mut dhp = Array2::<f64>::zeros((b, 3 * hh));
                    for step in (0..t).rev() {
                        for bi in 0..b {
                            for j in 0..hh {
                                let dh = dout[[bi, step, j]] + dh_next[[bi, j]];
                                let (r, z, n) = (tr.r[[step, bi, j]], tr.z[[step, bi, j]], tr.n[[step, bi, j]]);
                                let hprev = tr.h_prev[[step, bi, j]];
                                let dn = dh * (1.0 - z);
                                let dz = dh * (hprev - n);
                                let da_n = dn * (1.0 - n * n);
                                let dr = da_n * tr.hn[[step, bi, j]];
                                let da_r = dr * r * (1.0 - r);
                                let da_z = dz * z * (1.0 - z);
                                dxp[[bi, step, j]] = da_r;
                                dxp[[bi, step, hh + j]] = da_z;
                                dxp[[bi, step, 2 * hh + j]] = da_n;
                                dhp[[bi, j]] = da_r;
                                dhp[[bi, hh + j]] = da_z;
                                dhp[[bi, 2 * hh + j]] = da_n * r;
                                dh_next[[bi, j]] = dh * z;
                            }
                        }
                        dh_next += &dhp.dot(&w.t());
                        dhp_all.slice_mut(s![step * b..(step + 1) * b, ..]).assign(&dhp);
                    }
                    let hprev = tr.h_prev.view().into_shape_with_order((t * b, hh)).expect("contiguous");
                    acc(tr.w_hh, hprev.t().dot(&dhp_all).into_dyn());
                    acc(tr.b_hh, dhp_all.sum_axis(Axis(0)).into_dyn());
                    acc(tr.xp, dxp.into_dyn());
                }
                Op::SiSdr(a, reference) => {
                    let gs = g.iter().next().copied().unwrap_or(0.0);
                    let est = self.value(*a);
                    let value = node.value.iter().next().copied().unwrap_or(0.0);
                    let d = if value.abs() >= SI_SDR_CAP_DB {
                        Tensor::zeros(est.raw_dim())
                    } else {
                        si_sdr_gradient(est, reference) * gs
                    };
                    acc(*a, d);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients of the parameters that appear in this graph.
    pub fn param_gradients(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = self
            .params
            .iter()
            .map(|(&id, &v)| {
                let g = grads
                    .wrt(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).raw_dim()));
                (id, g)
            })
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// `d/dŝ 10 log10(|αs|² / |ŝ − αs|²) = 10/ln10 · (2s/<ŝ,s> − 2e/|e|²)`.
fn si_sdr_gradient(est: &Tensor, reference: &[f64]) -> Tensor {
    let e_ss: f64 = reference.iter().map(|v| v * v).sum();
    let dot: f64 = est.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = dot / e_ss;
    let noise: Vec<f64> = est.iter().zip(reference).map(|(x, s)| x - alpha * s).collect();
    let e_nn: f64 = noise.iter().map(|v| v * v).sum();
    let k = 10.0 / std::f64::consts::LN_10;
    let flat: Vec<f64> = reference
        .iter()
        .zip(&noise)
        .map(|(s, e)| k * (2.0 * s / dot - 2.0 * e / e_nn))
        .collect();
    Tensor::from_shape_vec(est.raw_dim(), flat).expect("same length")
}
