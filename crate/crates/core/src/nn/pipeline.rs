use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BeamformerVariant, Domain, PipelineConfig};
use super::graph::{Graph, Tensor, Var};
use super::heads::{FdHead, HeadDims, HeadStatistics, TdHead, TdHeadInput};
use super::loss::{lmfb_loss, mel_filterbank, stft_graph};
use super::params::{ParamId, ParamStore};
use super::tcn::Tcn;
use crate::beamform::{
    apply_fd, apply_latent, apply_td, fd_eq_mcwf, fd_eq_mvdr, fd_scm, latent_eq_mcwf, td_eq_mcwf,
    td_eq_mvdr, td_scm, Averaging, LatentVariant, ScmKind,
};
use crate::dsp::{
    fractional_delay, frame, istft, stft, ComplexSpectrogram, FrameGrid, MultichannelSignal, StftKernel,
};
use crate::error::{Error, Result};
use crate::features::{decode, ls_decoder, FdFeatureStack, LearnableFilterBank};
use crate::scene::{ArrayGeometry, Scene};

/// Window and hop of the spectrogram the mel loss is computed on.
const MEL_GRID: FrameGrid = FrameGrid {
    window: 512,
    hop: 256,
};

/// Where the separated target and interference estimates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    Estimator,
    /// True source images; only the beamforming head is exercised.
    Oracle,
}

#[derive(Debug, Clone)]
struct FdInput {
    y_re: Tensor,
    y_im: Tensor,
    features: Tensor,
    spec: ComplexSpectrogram,
    oracle: Option<[Tensor; 4]>,
}

#[derive(Debug, Clone)]
struct TdInput {
    frames: Tensor,
    oracle: Option<[Tensor; 2]>,
    delays: Tensor,
}

#[derive(Debug, Clone)]
enum DomainInput {
    Fd(FdInput),
    Td(TdInput),
}

/// One utterance made ready for the graph: padded mixture, the constant
/// parts of the features, and the training target when known.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    data: DomainInput,
    front: usize,
    len: usize,
    sample_rate: u32,
    padded_len: usize,
    target: Option<Vec<f64>>,
    target_magnitude: Option<Array2<f64>>,
}

impl PreparedInput {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Reference-channel estimate, `[len]`.
    pub estimate: Var,
    /// Separated target and interference: FD `(re, im)` pairs `[C, T, F]`,
    /// TD signals `[C, L]` (padded).
    pub target_sep: (Var, Option<Var>),
    pub interference_sep: (Var, Option<Var>),
    /// Masked mixture latent for the target, TD only, `[C, T, F′]`.
    pub target_latent: Option<Var>,
    pub mixture_latent: Option<Var>,
}

#[derive(Debug, Clone)]
enum Head {
    None,
    Fd(FdHead),
    Td(TdHead),
}

#[derive(Debug, Clone)]
struct Encoder {
    k0: ParamId,
    windows: ParamId,
    decoder: ParamId,
}

/// A mask estimator plus optional learned beamforming head, in either
/// domain, with its parameters.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub store: ParamStore,
    geometry: ArrayGeometry,
    pairs: Vec<(usize, usize)>,
    grid: FrameGrid,
    bands: usize,
    tcn: Tcn,
    head: Head,
    encoder: Option<Encoder>,
}

fn t2(a: Array2<f64>) -> Tensor {
    a.into_dyn()
}

fn complex_planes(values: &Array3<Complex64>) -> (Tensor, Tensor) {
    (values.mapv(|c| c.re).into_dyn(), values.mapv(|c| c.im).into_dyn())
}

/// `1 / Σ_t w(k − tH)²` (zero where no frame covers `k`).
fn ola_inverse_norm(window: &[f64], hop: usize, frames: usize, len: usize) -> Tensor {
    let mut norm = vec![0.0; len];
    for t in 0..frames {
        for (j, w) in window.iter().enumerate() {
            if t * hop + j < len {
                norm[t * hop + j] += w * w;
            }
        }
    }
    Tensor::from_shape_vec(vec![len], norm.into_iter().map(|d| if d > 1e-12 { 1.0 / d } else { 0.0 }).collect())
        .expect("len")
}

impl Pipeline {
    pub fn new(config: PipelineConfig, geometry: ArrayGeometry) -> Result<Self> {
        config.validate()?;
        geometry.validate()?;
        let pairs = config.pairs.clone().unwrap_or_else(|| geometry.pairs.clone());
        let m = geometry.channels();
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= m || b >= m || a == b) {
            return Err(Error::Config(format!("pair ({a},{b}) invalid for {m} channels")));
        }
        if pairs.is_empty() {
            return Err(Error::Config("at least one microphone pair is needed".into()));
        }
        let grid = config.grid()?;
        let bands = config.bands()?;
        let p = pairs.len();
        let mask_channels = if config.multichannel_mask { m } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();

        let (input, outputs, encoder) = match config.domain {
            Domain::Fd => {
                let width = bands * (2 + p * config.ipd_encoding.width());
                (width, 4 * mask_channels * bands, None)
            }
            Domain::Td => {
                let bank = LearnableFilterBank::random(grid.window, bands, m, geometry.reference, config.seed);
                let decoder = ls_decoder(bank.k0())?;
                let encoder = Encoder {
                    k0: store.add("encoder.k0", bank.k0().to_owned().into_dyn()),
                    windows: store.add_const("encoder.windows", &[m, grid.window], 1.0),
                    decoder: store.add("decoder", decoder.into_dyn()),
                };
                (bands * (p + 2), 2 * mask_channels * bands, Some(encoder))
            }
        };
        let tcn = Tcn::new(&mut store, "tcn", input, outputs, &config.tcn, &mut rng);
        let statistics = match config.beamformer {
            BeamformerVariant::AnMvdr => Some(HeadStatistics::Mvdr),
            BeamformerVariant::AnMcwf => Some(HeadStatistics::Mcwf),
            _ => None,
        };
        let head = match (statistics, config.domain) {
            (None, _) => Head::None,
            (Some(st), Domain::Fd) => Head::Fd(FdHead::new(
                &mut store,
                m,
                st,
                config.head_projection(),
                config.head_gru(),
                &mut rng,
            )),
            (Some(st), Domain::Td) => {
                let input = if st == HeadStatistics::Mcwf && !config.multichannel_mask {
                    TdHeadInput::MatrixAndVector
                } else {
                    TdHeadInput::PairOfMatrices
                };
                Head::Td(TdHead::new(
                    &mut store,
                    m,
                    grid.window,
                    input,
                    config.head_projection(),
                    config.head_gru(),
                    &mut rng,
                ))
            }
        };
        Ok(Self {
            config,
            store,
            geometry,
            pairs,
            grid,
            bands,
            tcn,
            head,
            encoder,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> FrameGrid {
        self.grid
    }

    /// Microphone pairs the spatial features use.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Widths of the learned beamforming head, if any.
    pub fn head_dims(&self) -> Option<HeadDims> {
        match &self.head {
            Head::None => None,
            Head::Fd(h) => Some(h.net.dims(&self.store)),
            Head::Td(h) => Some(h.net.dims(&self.store)),
        }
    }

    /// Parameters of the beamforming head.
    pub fn head_params(&self) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|&id| self.store.name(id).starts_with("head."))
            .collect()
    }

    /// The current time-domain analysis filters as a filter bank.
    pub fn filter_bank(&self) -> Option<LearnableFilterBank> {
        let e = self.encoder.as_ref()?;
        let k0 = self.store.value(e.k0).clone().into_dimensionality().ok()?;
        let mut w: Array2<f64> = self.store.value(e.windows).clone().into_dimensionality().ok()?;
        w.row_mut(self.geometry.reference).fill(1.0);
        LearnableFilterBank::new(k0, w, self.geometry.reference).ok()
    }

    pub fn prepare_scene(&self, scene: &Scene) -> Result<PreparedInput> {
        self.prepare(
            &scene.mixture,
            scene.spec.target_doa,
            Some(&scene.target),
            Some(&scene.interferer),
        )
    }

    /// Pads and analyses a mixture. `target` supplies the training reference
    /// (its reference channel); `target` and `interferer` together enable
    /// [`MaskSource::Oracle`].
    pub fn prepare(
        &self,
        mixture: &MultichannelSignal,
        target_doa: f64,
        target: Option<&MultichannelSignal>,
        interferer: Option<&MultichannelSignal>,
    ) -> Result<PreparedInput> {
        let m = self.geometry.channels();
        if mixture.channels() != m {
            return Err(Error::shape("mixture channels", m, mixture.channels()));
        }
        for (name, sig) in [("target", target), ("interferer", interferer)] {
            if let Some(s) = sig {
                if s.channels() != m || s.len() != mixture.len() {
                    return Err(Error::shape(name, (m, mixture.len()), (s.channels(), s.len())));
                }
            }
        }
        let len = mixture.len();
        let (front, back) = self.grid.analysis_padding(len);
        let y = mixture.padded(front, back);
        let sr = mixture.sample_rate();
        let reference = self.geometry.reference;
        let target_ref = target.map(|t| t.channel_vec(reference));
        let target_magnitude = match &target_ref {
            Some(t) if t.len() >= MEL_GRID.window => {
                let kernel = StftKernel::sqrt_hann(MEL_GRID.window);
                let spec = stft(&MultichannelSignal::mono(t.clone(), sr)?, &kernel, MEL_GRID)?;
                Some(spec.values.index_axis(Axis(0), 0).mapv(|c| c.norm()))
            }
            _ => None,
        };
        let oracle_pair = match (target, interferer) {
            (Some(s), Some(n)) => Some((s.padded(front, back), n.padded(front, back))),
            _ => None,
        };
        let data = match self.config.domain {
            Domain::Fd => {
                let kernel = StftKernel::sqrt_hann(self.grid.window);
                let spec = stft(&y, &kernel, self.grid)?;
                let geometry = ArrayGeometry {
                    pairs: self.pairs.clone(),
                    ..self.geometry.clone()
                };
                let feats = FdFeatureStack::compute(&spec, &geometry, target_doa, &kernel)?
                    .concatenated(self.config.ipd_encoding);
                let (y_re, y_im) = complex_planes(&spec.values);
                let oracle = match &oracle_pair {
                    Some((s, n)) => {
                        let (sr_, si) = complex_planes(&stft(s, &kernel, self.grid)?.values);
                        let (nr, ni) = complex_planes(&stft(n, &kernel, self.grid)?.values);
                        Some([sr_, si, nr, ni])
                    }
                    None => None,
                };
                DomainInput::Fd(FdInput {
                    y_re,
                    y_im,
                    features: t2(feats.reversed_axes().as_standard_layout().into_owned()),
                    spec,
                    oracle,
                })
            }
            Domain::Td => {
                let n = self.grid.window;
                let mut impulse = vec![0.0; n];
                impulse[0] = 1.0;
                let delays = Array2::from_shape_fn((self.pairs.len(), n), |(p, i)| {
                    let (a, b) = self.pairs[p];
                    let tau = (self.geometry.positions[b] - self.geometry.positions[a])
                        * target_doa.to_radians().cos()
                        * sr as f64
                        / self.geometry.sound_speed;
                    fractional_delay(&impulse, tau)[i]
                });
                DomainInput::Td(TdInput {
                    frames: frame(&y, self.grid)?.into_dyn(),
                    oracle: oracle_pair.map(|(s, n)| [t2(s.into_samples()), t2(n.into_samples())]),
                    delays: t2(delays),
                })
            }
        };
        Ok(PreparedInput {
            data,
            front,
            len,
            sample_rate: sr,
            padded_len: y.len(),
            target: target_ref,
            target_magnitude,
        })
    }

    pub fn forward(&self, g: &mut Graph, input: &PreparedInput, masks: MaskSource) -> Result<ForwardOutput> {
        match &input.data {
            DomainInput::Fd(d) => self.forward_fd(g, input, d, masks),
            DomainInput::Td(d) => self.forward_td(g, input, d, masks),
        }
    }

    /// Weighted training objective: `−SI-SDR` plus the optional mel term.
    pub fn loss(&self, g: &mut Graph, input: &PreparedInput, out: &ForwardOutput) -> Result<Var> {
        let target = input
            .target
            .as_ref()
            .ok_or_else(|| Error::Config("training needs the target signal".into()))?;
        let w = self.config.loss;
        let sdr = g.si_sdr(out.estimate, target)?;
        let mut loss = g.scale(sdr, -w.si_sdr);
        if w.lmfb > 0.0 {
            let mag = input
                .target_magnitude
                .as_ref()
                .ok_or_else(|| Error::Config("mel loss needs at least one 512-sample frame".into()))?;
            let est = g.reshape(out.estimate, &[1, input.len])?;
            let kernel = StftKernel::sqrt_hann(MEL_GRID.window);
            let (re, im) = stft_graph(g, est, kernel.window(), MEL_GRID.hop)?;
            let bank = mel_filterbank(
                w.mel_bands,
                MEL_GRID.window,
                input.sample_rate,
                0.0,
                input.sample_rate as f64 / 2.0,
            );
            let l = lmfb_loss(g, re, im, mag, &bank)?;
            let l = g.scale(l, w.lmfb);
            loss = g.add(loss, l)?;
        }
        Ok(loss)
    }

    fn mask_channels(&self) -> usize {
        if self.config.multichannel_mask {
            self.geometry.channels()
        } else {
            1
        }
    }

    fn forward_fd(&self, g: &mut Graph, input: &PreparedInput, d: &FdInput, masks: MaskSource) -> Result<ForwardOutput> {
        let (m, t, f) = (d.y_re.shape()[0], d.y_re.shape()[1], d.y_re.shape()[2]);
        let y_re = g.constant(d.y_re.clone());
        let y_im = g.constant(d.y_im.clone());
        let (s_re, s_im, n_re, n_im) = match masks {
            MaskSource::Oracle => {
                let o = d
                    .oracle
                    .as_ref()
                    .ok_or_else(|| Error::Config("oracle masks need the source images".into()))?;
                (
                    g.constant(o[0].clone()),
                    g.constant(o[1].clone()),
                    g.constant(o[2].clone()),
                    g.constant(o[3].clone()),
                )
            }
            MaskSource::Estimator => {
                let c = self.mask_channels();
                let x = g.constant(d.features.clone());
                let raw = self.tcn.forward(g, &self.store, x)?;
                let raw = g.reshape(raw, &[4, c, f, t])?;
                let raw = g.permute(raw, &[0, 1, 3, 2])?;
                let mut part = |k: usize| -> Result<Var> {
                    let p = g.slice(raw, 0, k, k + 1)?;
                    g.reshape(p, &[c, t, f])
                };
                let (ms_re, ms_im, mn_re, mn_im) = (part(0)?, part(1)?, part(2)?, part(3)?);
                let (s_re, s_im) = complex_mul(g, ms_re, ms_im, y_re, y_im)?;
                let (n_re, n_im) = complex_mul(g, mn_re, mn_im, y_re, y_im)?;
                (s_re, s_im, n_re, n_im)
            }
        };
        let reference = self.geometry.reference;
        let (out_re, out_im) = match &self.head {
            Head::Fd(head) => {
                let (a, b) = match head.statistics {
                    HeadStatistics::Mvdr => (
                        outer_fd(g, (s_re, s_im), (s_re, s_im), m, t, f)?,
                        outer_fd(g, (n_re, n_im), (n_re, n_im), m, t, f)?,
                    ),
                    HeadStatistics::Mcwf => (
                        outer_fd(g, (y_re, y_im), (y_re, y_im), m, t, f)?,
                        outer_fd(g, (y_re, y_im), (s_re, s_im), m, t, f)?,
                    ),
                };
                let stats = g.concat(&[a.0, a.1, b.0, b.1], 2)?;
                let w = head.forward(g, &self.store, stats)?;
                let w_re = g.slice(w, 2, 0, m)?;
                let w_im = g.slice(w, 2, m, 2 * m)?;
                // Σ_m conj(w_m) Y_m with Y as [F, T, M]
                let yr = g.permute(y_re, &[2, 1, 0])?;
                let yi = g.permute(y_im, &[2, 1, 0])?;
                let a = g.mul(w_re, yr)?;
                let b = g.mul(w_im, yi)?;
                let re = g.add(a, b)?;
                let a = g.mul(w_re, yi)?;
                let b = g.mul(w_im, yr)?;
                let im = g.sub(a, b)?;
                let re = g.sum_axis(re, 2)?;
                let im = g.sum_axis(im, 2)?;
                (g.permute(re, &[1, 0])?, g.permute(im, &[1, 0])?)
            }
            _ => {
                let ch = if g.shape(s_re)[0] == 1 { 0 } else { reference };
                let re = g.slice(s_re, 0, ch, ch + 1)?;
                let im = g.slice(s_im, 0, ch, ch + 1)?;
                (g.reshape(re, &[t, f])?, g.reshape(im, &[t, f])?)
            }
        };
        let estimate = self.istft_graph(g, out_re, out_im, input)?;
        Ok(ForwardOutput {
            estimate,
            target_sep: (s_re, Some(s_im)),
            interference_sep: (n_re, Some(n_im)),
            target_latent: None,
            mixture_latent: None,
        })
    }

    /// Inverse STFT of a one-channel `[T, F]` spectrogram with the analysis
    /// window as synthesis window, cropped back to the input length.
    fn istft_graph(&self, g: &mut Graph, re: Var, im: Var, input: &PreparedInput) -> Result<Var> {
        let n = self.grid.window;
        let bins = n / 2 + 1;
        let t = g.shape(re)[0];
        let weight = |k: usize| if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
        let cr = Tensor::from_shape_fn(vec![bins, n], |d| {
            weight(d[0]) * (2.0 * PI * (d[0] * d[1]) as f64 / n as f64).cos() / n as f64
        });
        let ci = Tensor::from_shape_fn(vec![bins, n], |d| {
            -weight(d[0]) * (2.0 * PI * (d[0] * d[1]) as f64 / n as f64).sin() / n as f64
        });
        let kernel = StftKernel::sqrt_hann(n);
        let cr = g.constant(cr);
        let ci = g.constant(ci);
        let a = g.matmul(re, cr)?;
        let b = g.matmul(im, ci)?;
        let frames = g.add(a, b)?;
        let w = g.constant(Tensor::from_shape_vec(vec![n], kernel.window().to_vec()).expect("n"));
        let frames = g.mul(frames, w)?;
        let frames = g.reshape(frames, &[1, t, n])?;
        let y = g.overlap_add(frames, self.grid.hop)?;
        let inv = g.constant(ola_inverse_norm(kernel.window(), self.grid.hop, t, input.padded_len));
        let y = g.mul(y, inv)?;
        let y = g.slice(y, 1, input.front, input.front + input.len)?;
        g.reshape(y, &[input.len])
    }

    fn forward_td(&self, g: &mut Graph, input: &PreparedInput, d: &TdInput, masks: MaskSource) -> Result<ForwardOutput> {
        let enc = self.encoder.as_ref().expect("time-domain pipeline has an encoder");
        let (m, t, n) = (d.frames.shape()[0], d.frames.shape()[1], d.frames.shape()[2]);
        let fb = self.bands;
        let reference = self.geometry.reference;
        let ones = vec![1.0; n];
        let inv = ola_inverse_norm(&ones, self.grid.hop, t, input.padded_len);
        let yf = g.constant(d.frames.clone());

        // Analysis filters K^m = w^m ⊙ K0 with the reference window pinned.
        let k0 = g.param(&self.store, enc.k0);
        let win = g.param(&self.store, enc.windows);
        let free = g.constant(Tensor::from_shape_fn(vec![m, n], |i| if i[0] == reference { 0.0 } else { 1.0 }));
        let pinned = g.constant(Tensor::from_shape_fn(vec![m, n], |i| if i[0] == reference { 1.0 } else { 0.0 }));
        let w = g.mul(win, free)?;
        let w = g.add(w, pinned)?;
        let w = g.reshape(w, &[m, n, 1])?;
        let filters = g.mul(w, k0)?;
        let latent = g.matmul(yf, filters)?;

        let decoder = g.param(&self.store, enc.decoder);
        let inv_v = g.constant(inv);
        let decode = |g: &mut Graph, lat: Var| -> Result<Var> {
            let c = g.shape(lat)[0];
            let fr = g.matmul(lat, decoder)?;
            let sig = g.overlap_add(fr, self.grid.hop)?;
            let sig = g.mul(sig, inv_v)?;
            debug_assert_eq!(g.shape(sig), &[c, input.padded_len]);
            Ok(sig)
        };

        let (s_sig, n_sig, s_lat) = match masks {
            MaskSource::Oracle => {
                let o = d
                    .oracle
                    .as_ref()
                    .ok_or_else(|| Error::Config("oracle masks need the source images".into()))?;
                (g.constant(o[0].clone()), g.constant(o[1].clone()), None)
            }
            MaskSource::Estimator => {
                let feats = self.td_features(g, latent, filters, &d.delays, m, t)?;
                let c = self.mask_channels();
                let raw = self.tcn.forward(g, &self.store, feats)?;
                let raw = g.reshape(raw, &[2, c, fb, t])?;
                let raw = g.permute(raw, &[0, 1, 3, 2])?;
                let raw = g.sigmoid(raw);
                let ms = g.slice(raw, 0, 0, 1)?;
                let ms = g.reshape(ms, &[c, t, fb])?;
                let mn = g.slice(raw, 0, 1, 2)?;
                let mn = g.reshape(mn, &[c, t, fb])?;
                let ls = g.mul(ms, latent)?;
                let ln = g.mul(mn, latent)?;
                (decode(g, ls)?, decode(g, ln)?, Some(ls))
            }
        };

        let out = match &self.head {
            Head::Td(head) => {
                let sf = g.frame(s_sig, self.grid.hop, n)?;
                let yp = g.permute(yf, &[1, 2, 0])?;
                let sp = g.permute(sf, &[1, 2, 0])?;
                let stats = match head.input {
                    TdHeadInput::PairOfMatrices => {
                        let (a, b) = if self.is_mvdr_head() {
                            let nf = g.frame(n_sig, self.grid.hop, n)?;
                            let np = g.permute(nf, &[1, 2, 0])?;
                            (outer_td(g, sp, sp, t, n, m)?, outer_td(g, np, np, t, n, m)?)
                        } else {
                            (outer_td(g, yp, yp, t, n, m)?, outer_td(g, yp, sp, t, n, m)?)
                        };
                        g.concat(&[a, b], 1)?
                    }
                    TdHeadInput::MatrixAndVector => {
                        let a = outer_td(g, yp, yp, t, n, m)?;
                        let ch = if g.shape(sp)[2] == 1 { 0 } else { reference };
                        let sref = g.slice(sp, 2, ch, ch + 1)?;
                        let v = g.mul(yp, sref)?;
                        let v = g.reshape(v, &[t, n * m])?;
                        g.concat(&[a, v], 1)?
                    }
                };
                let stats = g.reshape(stats, &[1, t, head.input_width()])?;
                let w = head.forward(g, &self.store, stats)?;
                let w = g.reshape(w, &[t, n, m])?;
                let prod = g.mul(w, yp)?;
                let fr = g.sum_axis(prod, 2)?;
                let fr = g.reshape(fr, &[1, t, n])?;
                let sig = g.overlap_add(fr, self.grid.hop)?;
                g.mul(sig, inv_v)?
            }
            _ => {
                let ch = if g.shape(s_sig)[0] == 1 { 0 } else { reference };
                g.slice(s_sig, 0, ch, ch + 1)?
            }
        };
        let out = g.slice(out, 1, input.front, input.front + input.len)?;
        let estimate = g.reshape(out, &[input.len])?;
        Ok(ForwardOutput {
            estimate,
            target_sep: (s_sig, None),
            interference_sep: (n_sig, None),
            target_latent: s_lat,
            mixture_latent: Some(latent),
        })
    }

    fn is_mvdr_head(&self) -> bool {
        self.config.beamformer == BeamformerVariant::AnMvdr
    }

    /// `[R | ICD_1..ICD_P | LD-DF]` computed in the graph from the latent
    /// `[M, T, F′]` and filters `[M, N, F′]`; returns `[(P+2)·F′, T]`.
    fn td_features(&self, g: &mut Graph, latent: Var, filters: Var, delays: &Tensor, m: usize, t: usize) -> Result<Var> {
        let fb = self.bands;
        let n = self.grid.window;
        let reference = self.geometry.reference;
        let r = g.slice(latent, 0, reference, reference + 1)?;
        let r = g.relu(r);
        let mut icds = Vec::new();
        let mut ticds = Vec::new();
        let delays = g.constant(delays.clone());
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            debug_assert!(a < m && b < m);
            let la = g.slice(latent, 0, a, a + 1)?;
            let lb = g.slice(latent, 0, b, b + 1)?;
            icds.push(g.sub(la, lb)?);
            let ka = g.slice(filters, 0, a, a + 1)?;
            let ka = g.slice(ka, 1, 0, 1)?;
            let ka = g.reshape(ka, &[1, fb])?;
            let kb = g.slice(filters, 0, b, b + 1)?;
            let kb = g.reshape(kb, &[n, fb])?;
            let h = g.slice(delays, 0, p, p + 1)?;
            let hk = g.matmul(h, kb)?;
            ticds.push(g.sub(ka, hk)?);
        }
        let icd = g.concat(&icds, 0)?;
        let ticd = g.concat(&ticds, 0)?;
        let ticd = g.reshape(ticd, &[self.pairs.len(), 1, fb])?;
        let prod = g.mul(icd, ticd)?;
        let dot = g.sum_axis(prod, 0)?;
        let sq = g.mul(icd, icd)?;
        let sq = g.sum_axis(sq, 0)?;
        let icd_norm = g.sqrt(sq);
        let tq = g.mul(ticd, ticd)?;
        let tq = g.sum_axis(tq, 0)?;
        let t_norm = g.sqrt(tq);
        let den = g.mul(icd_norm, t_norm)?;
        let den = g.add_scalar(den, crate::features::LD_DF_EPS);
        let ld = g.div(dot, den)?;
        let ld = g.reshape(ld, &[1, t, fb])?;
        let stack = g.concat(&[r, icd, ld], 0)?;
        let stack = g.permute(stack, &[0, 2, 1])?;
        g.reshape(stack, &[(self.pairs.len() + 2) * fb, t])
    }

    /// Full inference: learned output for mask-only and learned heads, the
    /// closed-form beamformer on the estimated statistics otherwise.
    /// Returns the reference-channel estimate with the input length.
    pub fn separate(&self, input: &PreparedInput, masks: MaskSource) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, masks)?;
        let reference = self.geometry.reference;
        let variant = self.config.beamformer;
        if matches!(variant, BeamformerVariant::MaskOnly) || variant.is_learned_head() {
            return Ok(g.value(out.estimate).iter().copied().collect());
        }
        let sr = input.sample_rate;
        let signal = match &input.data {
            DomainInput::Fd(d) => {
                let to_complex = |re: Var, im: Var| -> Array3<Complex64> {
                    let (re, im) = (g.value(re), g.value(im));
                    let shape = re.shape();
                    let mut out = Array3::from_shape_fn((shape[0], shape[1], shape[2]), |(a, b, c)| {
                        Complex64::new(re[[a, b, c]], im[[a, b, c]])
                    });
                    if shape[0] == 1 {
                        out = ndarray::concatenate(Axis(0), &vec![out.view(); d.spec.channels()]).expect("same shape");
                    }
                    out
                };
                let s = to_complex(out.target_sep.0, out.target_sep.1.expect("fd"));
                let n = to_complex(out.interference_sep.0, out.interference_sep.1.expect("fd"));
                let y = &d.spec.values;
                let w = match variant {
                    BeamformerVariant::EqMvdr => fd_eq_mvdr(
                        &fd_scm(n.view(), n.view(), ScmKind::Nn, true)?,
                        &fd_scm(s.view(), s.view(), ScmKind::Ss, true)?,
                        reference,
                    )?,
                    _ => fd_eq_mcwf(
                        &fd_scm(y.view(), y.view(), ScmKind::Yy, true)?,
                        &fd_scm(y.view(), s.view(), ScmKind::Ys, true)?,
                        reference,
                    )?,
                };
                istft(&apply_fd(&w, &d.spec)?, &StftKernel::sqrt_hann(self.grid.window))?
            }
            DomainInput::Td(d) => {
                let frames: Array3<f64> = d.frames.clone().into_dimensionality().expect("rank 3");
                let broadcast = |v: &Tensor| -> Result<MultichannelSignal> {
                    let a: Array2<f64> = v.clone().into_dimensionality().expect("rank 2");
                    let a = if a.nrows() == 1 {
                        a.broadcast((frames.dim().0, a.ncols())).expect("row").to_owned()
                    } else {
                        a
                    };
                    MultichannelSignal::new(a, sr)
                };
                match variant {
                    BeamformerVariant::EqMvdr | BeamformerVariant::EqMcwf => {
                        let s = frame(&broadcast(g.value(out.target_sep.0))?, self.grid)?;
                        let w = if variant == BeamformerVariant::EqMvdr {
                            let n = frame(&broadcast(g.value(out.interference_sep.0))?, self.grid)?;
                            td_eq_mvdr(
                                &td_scm(n.view(), n.view(), ScmKind::Nn, Averaging::PerSample)?,
                                &td_scm(s.view(), s.view(), ScmKind::Ss, Averaging::PerSample)?,
                                reference,
                            )?
                        } else {
                            td_eq_mcwf(
                                &td_scm(frames.view(), frames.view(), ScmKind::Yy, Averaging::PerSample)?,
                                &td_scm(frames.view(), s.view(), ScmKind::Ys, Averaging::PerSample)?,
                                reference,
                            )?
                        };
                        apply_td(&w, frames.view(), self.grid.hop, sr)?
                    }
                    _ => {
                        let mix: Array3<f64> = g
                            .value(out.mixture_latent.expect("td"))
                            .clone()
                            .into_dimensionality()
                            .expect("rank 3");
                        let target = match out.target_latent {
                            Some(v) => {
                                let lat: Array3<f64> = g.value(v).clone().into_dimensionality().expect("rank 3");
                                let ch = if lat.dim().0 == 1 { 0 } else { reference };
                                lat.index_axis(Axis(0), ch).to_owned()
                            }
                            None => {
                                // Oracle: encode the true target with the reference filters.
                                let bank = self.filter_bank().expect("td");
                                let sig = broadcast(g.value(out.target_sep.0))?;
                                crate::features::encode(&sig, &bank, self.grid)?
                                    .values
                                    .index_axis(Axis(0), reference)
                                    .to_owned()
                            }
                        };
                        let lv = if variant == BeamformerVariant::LatentTiMcwf {
                            LatentVariant::TimeInvariant
                        } else {
                            LatentVariant::TimeVariant
                        };
                        let w = latent_eq_mcwf(mix.view(), target.view(), lv)?;
                        let est = apply_latent(w.view(), mix.view())?;
                        let dec: Array2<f64> = self
                            .store
                            .value(self.encoder.as_ref().expect("td").decoder)
                            .clone()
                            .into_dimensionality()
                            .expect("rank 2");
                        decode(est.insert_axis(Axis(0)).view(), dec.view(), self.grid, sr)?
                    }
                }
            }
        };
        let signal = if signal.len() < input.padded_len {
            signal.padded(0, input.padded_len - signal.len())
        } else {
            signal
        };
        Ok(signal.channel(0).slice(s![input.front..input.front + input.len]).to_vec())
    }
}

pub fn complex_mul(g: &mut Graph, ar: Var, ai: Var, br: Var, bi: Var) -> Result<(Var, Var)> {
    let rr = g.mul(ar, br)?;
    let ii = g.mul(ai, bi)?;
    let re = g.sub(rr, ii)?;
    let ri = g.mul(ar, bi)?;
    let ir = g.mul(ai, br)?;
    let im = g.add(ri, ir)?;
    Ok((re, im))
}

/// Per-unit `a bᴴ` of `[C, T, F]` complex planes (C is M or broadcast 1),
/// flattened to `[F, T, M²]` real and imaginary parts.
fn outer_fd(g: &mut Graph, a: (Var, Var), b: (Var, Var), m: usize, t: usize, f: usize) -> Result<(Var, Var)> {
    let mut expand = |v: Var, last: bool| -> Result<Var> {
        let c = g.shape(v)[0];
        let p = g.permute(v, &[2, 1, 0])?;
        if last {
            g.reshape(p, &[f, t, 1, c])
        } else {
            g.reshape(p, &[f, t, c, 1])
        }
    };
    let (ar, ai) = (expand(a.0, false)?, expand(a.1, false)?);
    let (br, bi) = (expand(b.0, true)?, expand(b.1, true)?);
    let x = g.mul(ar, br)?;
    let y = g.mul(ai, bi)?;
    let re = g.add(x, y)?;
    let x = g.mul(ai, br)?;
    let y = g.mul(ar, bi)?;
    let im = g.sub(x, y)?;
    let ch = |g: &Graph, v: Var| g.shape(v)[2] * g.shape(v)[3];
    if ch(g, re) != m * m {
        // A shared mask broadcasts to all channels only through Y; statistics
        // of a one-channel estimate are not defined.
        return Err(Error::shape("fd statistics channels", m * m, ch(g, re)));
    }
    Ok((g.reshape(re, &[f, t, m * m])?, g.reshape(im, &[f, t, m * m])?))
}

/// Per-sample `a bᵀ` of `[T, N, C]` frames, flattened to `[T, N·M²]`.
fn outer_td(g: &mut Graph, a: Var, b: Var, t: usize, n: usize, m: usize) -> Result<Var> {
    let ca = g.shape(a)[2];
    let cb = g.shape(b)[2];
    if ca != m || cb != m {
        return Err(Error::shape("td statistics channels", (m, m), (ca, cb)));
    }
    let a = g.reshape(a, &[t, n, m, 1])?;
    let b = g.reshape(b, &[t, n, 1, m])?;
    let o = g.mul(a, b)?;
    g.reshape(o, &[t, n * m * m])
}
