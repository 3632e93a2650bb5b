use std::f64::consts::PI;

use ndarray::Array2;

use super::graph::{Graph, Tensor, Var};
use crate::error::Result;

pub const MEL_FLOOR: f64 = 1e-8;

/// Negative SI-SDR in dB of a flattened estimate.
pub fn si_sdr_loss(g: &mut Graph, estimate: Var, reference: &[f64]) -> Result<Var> {
    let v = g.si_sdr(estimate, reference)?;
    Ok(g.scale(v, -1.0))
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the HTK mel scale between `fmin` and
/// `fmax`, evaluated at the `n_fft/2 + 1` bin frequencies. Shape
/// `[bins, bands]`.
pub fn mel_filterbank(bands: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Array2<f64> {
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
        .collect();
    Array2::from_shape_fn((bins, bands), |(k, b)| {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    })
}

/// Real and imaginary one-sided DFT bases of a windowed frame, each
/// `[N, N/2 + 1]`.
pub fn dft_basis(window: &[f64]) -> (Tensor, Tensor) {
    let n = window.len();
    let bins = n / 2 + 1;
    let re = Tensor::from_shape_fn(vec![n, bins], |d| {
        window[d[0]] * (2.0 * PI * (d[0] * d[1]) as f64 / n as f64).cos()
    });
    let im = Tensor::from_shape_fn(vec![n, bins], |d| {
        -window[d[0]] * (2.0 * PI * (d[0] * d[1]) as f64 / n as f64).sin()
    });
    (re, im)
}

/// STFT of a `[1, L]` signal in the graph; returns `(re, im)`, each `[T, F]`.
pub fn stft_graph(g: &mut Graph, x: Var, window: &[f64], hop: usize) -> Result<(Var, Var)> {
    let n = window.len();
    let frames = g.frame(x, hop, n)?;
    let t = g.shape(frames)[1];
    let frames = g.reshape(frames, &[t, n])?;
    let (br, bi) = dft_basis(window);
    let br = g.constant(br);
    let bi = g.constant(bi);
    Ok((g.matmul(frames, br)?, g.matmul(frames, bi)?))
}

/// Log10 mel energies of magnitudes `[T, F]` through `bank` (`[F, B]`).
pub fn log_mel(g: &mut Graph, magnitude: Var, bank: &Array2<f64>) -> Result<Var> {
    let b = g.constant(bank.clone().into_dyn());
    let e = g.matmul(magnitude, b)?;
    let e = g.clamp_min(e, MEL_FLOOR);
    Ok(g.log10(e))
}

/// Mean squared difference of log10 mel energies between an estimated
/// spectrogram (`re`, `im`, `[T, F]`) and target magnitudes.
pub fn lmfb_loss(g: &mut Graph, re: Var, im: Var, target_magnitude: &Array2<f64>, bank: &Array2<f64>) -> Result<Var> {
    let rr = g.mul(re, re)?;
    let ii = g.mul(im, im)?;
    let p = g.add(rr, ii)?;
    let mag = g.sqrt(p);
    let est = log_mel(g, mag, bank)?;
    let tm = g.constant(target_magnitude.clone().into_dyn());
    let tgt = log_mel(g, tm, bank)?;
    let d = g.sub(est, tgt)?;
    let d2 = g.mul(d, d)?;
    Ok(g.mean(d2))
}
