use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Sample rate used throughout the crate.
pub const SAMPLE_RATE: u32 = 16_000;

/// An M×K block of real samples. All channels share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl MultichannelSignal {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Config("signal needs at least one channel".into()));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample {} of channel {}",
                bad % samples.ncols().max(1),
                bad / samples.ncols().max(1)
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let m = channels.len();
        let k = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != k) {
            return Err(Error::Config("channels have different lengths".into()));
        }
        let mut samples = Array2::zeros((m, k));
        for (mut row, ch) in samples.rows_mut().into_iter().zip(channels) {
            row.assign(&ArrayView1::from(ch.as_slice()));
        }
        Self::new(samples, sample_rate)
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let k = samples.len();
        let arr = Array2::from_shape_vec((1, k), samples).expect("1×K shape");
        Self::new(arr, sample_rate)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels.max(1), len)),
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> ArrayView1<'_, f64> {
        self.samples.row(m)
    }

    pub fn channel_vec(&self, m: usize) -> Vec<f64> {
        self.samples.row(m).to_vec()
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    /// Keeps only the listed channels, in order.
    pub fn select_channels(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.channels()) {
            return Err(Error::Config(format!(
                "channel {bad} out of range for {}-channel signal",
                self.channels()
            )));
        }
        Self::new(self.samples.select(Axis(0), idx), self.sample_rate)
    }

    /// Zero-pads `front` samples before and `back` samples after every channel.
    pub fn padded(&self, front: usize, back: usize) -> Self {
        let (m, k) = self.samples.dim();
        let mut out = Array2::zeros((m, front + k + back));
        out.slice_mut(ndarray::s![.., front..front + k])
            .assign(&self.samples);
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    /// Samples `[start, start + len)`, zero-filled past the end.
    pub fn cropped(&self, start: usize, len: usize) -> Self {
        let (m, k) = self.samples.dim();
        let mut out = Array2::zeros((m, len));
        let end = (start + len).min(k);
        if start < end {
            out.slice_mut(ndarray::s![.., ..end - start])
                .assign(&self.samples.slice(ndarray::s![.., start..end]));
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: &self.samples * gain,
            sample_rate: self.sample_rate,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.samples.dim() != other.samples.dim() {
            return Err(Error::shape(
                "signal addition",
                self.samples.dim(),
                other.samples.dim(),
            ));
        }
        Ok(Self {
            samples: &self.samples + &other.samples,
            sample_rate: self.sample_rate,
        })
    }

    pub fn channel_power(&self, m: usize) -> f64 {
        let row = self.samples.row(m);
        row.dot(&row) / row.len().max(1) as f64
    }
}
