use ndarray::{s, Array2, Array3, ArrayView1, ArrayView3};
use serde::{Deserialize, Serialize};

use super::signal::MultichannelSignal;
use crate::error::{Error, Result};

/// Window length and hop of a segmentation; frame `t` covers `[tH, tH + N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub window: usize,
    pub hop: usize,
}

impl FrameGrid {
    pub fn new(window: usize, hop: usize) -> Result<Self> {
        if window == 0 || hop == 0 || hop > window {
            return Err(Error::Config(format!(
                "frame grid needs 0 < hop <= window, got window={window} hop={hop}"
            )));
        }
        Ok(Self { window, hop })
    }

    /// `floor((K - N) / H) + 1` for `K >= N`.
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.window {
            return Err(Error::SignalTooShort {
                len,
                window: self.window,
            });
        }
        Ok((len - self.window) / self.hop + 1)
    }

    /// Number of samples spanned by `frames` frames.
    pub fn span(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window
        }
    }

    /// Zero padding `(front, back)` so every sample of a length-`len` signal
    /// sits under the same number of frames as interior samples do.
    pub fn analysis_padding(&self, len: usize) -> (usize, usize) {
        let front = self.window - self.hop;
        let needed = front + len + front;
        let total = if needed <= self.window {
            self.window
        } else {
            let frames = (needed - self.window).div_ceil(self.hop) + 1;
            self.span(frames)
        };
        (front, total - front - len)
    }
}

/// Segments channel `m` into a T×N matrix.
pub fn frame_channel(x: ArrayView1<'_, f64>, grid: FrameGrid) -> Result<Array2<f64>> {
    let t = grid.frame_count(x.len())?;
    let mut out = Array2::zeros((t, grid.window));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = i * grid.hop;
        row.assign(&x.slice(s![start..start + grid.window]));
    }
    Ok(out)
}

/// Segments every channel: output is M×T×N.
pub fn frame(signal: &MultichannelSignal, grid: FrameGrid) -> Result<Array3<f64>> {
    let t = grid.frame_count(signal.len())?;
    let m = signal.channels();
    let mut out = Array3::zeros((m, t, grid.window));
    for ch in 0..m {
        let x = signal.channel(ch);
        for i in 0..t {
            let start = i * grid.hop;
            out.slice_mut(s![ch, i, ..])
                .assign(&x.slice(s![start..start + grid.window]));
        }
    }
    Ok(out)
}

/// Plain overlap-add of M×T×N frames, no window applied.
pub fn overlap_add(
    frames: ArrayView3<'_, f64>,
    hop: usize,
    sample_rate: u32,
) -> MultichannelSignal {
    let (m, t, n) = frames.dim();
    let len = if t == 0 { 0 } else { (t - 1) * hop + n };
    let mut out = Array2::zeros((m, len));
    for ch in 0..m {
        for i in 0..t {
            let start = i * hop;
            let mut dst = out.slice_mut(s![ch, start..start + n]);
            dst += &frames.slice(s![ch, i, ..]);
        }
    }
    MultichannelSignal::new(out, sample_rate).expect("finite frames give finite output")
}

/// Weighted overlap-add: `y(k) = Σ_t w(k-tH) f_t(k-tH) / Σ_t w(k-tH)^2`.
///
/// Samples where the squared-window sum vanishes are left at zero. With a
/// rectangular window this averages the overlapping frames.
pub fn overlap_add_normalized(
    frames: ArrayView3<'_, f64>,
    hop: usize,
    window: &[f64],
    sample_rate: u32,
) -> Result<MultichannelSignal> {
    let (m, t, n) = frames.dim();
    if window.len() != n {
        return Err(Error::shape(
            "overlap_add_normalized window",
            n,
            window.len(),
        ));
    }
    let len = if t == 0 { 0 } else { (t - 1) * hop + n };
    let mut norm = vec![0.0; len];
    for i in 0..t {
        for (j, w) in window.iter().enumerate() {
            norm[i * hop + j] += w * w;
        }
    }
    let mut out = Array2::zeros((m, len));
    for ch in 0..m {
        for i in 0..t {
            let start = i * hop;
            for j in 0..n {
                out[(ch, start + j)] += window[j] * frames[(ch, i, j)];
            }
        }
        for (k, d) in norm.iter().enumerate() {
            if *d > 1e-12 {
                out[(ch, k)] /= d;
            } else {
                out[(ch, k)] = 0.0;
            }
        }
    }
    MultichannelSignal::new(out, sample_rate)
}
