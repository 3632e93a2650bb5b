use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::framing::{overlap_add_normalized, FrameGrid};
use super::signal::MultichannelSignal;
use super::window;
use crate::error::{Error, Result};

/// The complex analysis kernel `F[n, f] = w[n] exp(-j 2π n f / N)`, one-sided.
#[derive(Debug, Clone, PartialEq)]
pub struct StftKernel {
    window: Vec<f64>,
}

impl StftKernel {
    pub fn new(window: Vec<f64>) -> Result<Self> {
        if window.len() < 2 {
            return Err(Error::Config("STFT window needs at least 2 samples".into()));
        }
        Ok(Self { window })
    }

    pub fn sqrt_hann(n: usize) -> Self {
        Self {
            window: window::sqrt_hann(n.max(2)),
        }
    }

    pub fn rectangular(n: usize) -> Self {
        Self {
            window: window::rectangular(n.max(2)),
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Number of one-sided bands, `N/2 + 1`.
    pub fn bands(&self) -> usize {
        self.window.len() / 2 + 1
    }

    pub fn coefficient(&self, n: usize, f: usize) -> Complex64 {
        let len = self.window.len() as f64;
        Complex64::from_polar(self.window[n], -2.0 * PI * (n * f) as f64 / len)
    }

    /// The N×F filter matrix.
    pub fn filters(&self) -> Array2<Complex64> {
        Array2::from_shape_fn((self.len(), self.bands()), |(n, f)| self.coefficient(n, f))
    }

    /// Centre frequency of band `f` in Hz.
    pub fn band_hz(&self, f: usize, sample_rate: u32) -> f64 {
        f as f64 * sample_rate as f64 / self.len() as f64
    }
}

/// M×T×F one-sided spectrogram plus the bookkeeping needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array3<Complex64>,
    pub grid: FrameGrid,
    pub sample_rate: u32,
    /// Length of the analysed signal; synthesis pads the tail back to it.
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn channels(&self) -> usize {
        self.values.dim().0
    }

    pub fn frames(&self) -> usize {
        self.values.dim().1
    }

    pub fn bands(&self) -> usize {
        self.values.dim().2
    }

    /// Same metadata, different values (e.g. a masked or beamformed output).
    pub fn with_values(&self, values: Array3<Complex64>) -> Result<Self> {
        let (_, t, f) = values.dim();
        if t != self.frames() || f != self.bands() {
            return Err(Error::shape(
                "spectrogram values",
                (self.frames(), self.bands()),
                (t, f),
            ));
        }
        Ok(Self {
            values,
            grid: self.grid,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        })
    }

    /// T×F view of one channel, copied.
    pub fn channel(&self, m: usize) -> Array2<Complex64> {
        self.values.index_axis(ndarray::Axis(0), m).to_owned()
    }

    pub fn from_single(
        channel: Array2<Complex64>,
        grid: FrameGrid,
        sample_rate: u32,
        signal_len: usize,
    ) -> Self {
        let (t, f) = channel.dim();
        Self {
            values: channel.into_shape_with_order((1, t, f)).expect("1×T×F"),
            grid,
            sample_rate,
            signal_len,
        }
    }
}

fn check_grid(kernel: &StftKernel, grid: FrameGrid) -> Result<()> {
    if grid.window != kernel.len() {
        return Err(Error::Config(format!(
            "frame grid window {} does not match kernel length {}",
            grid.window,
            kernel.len()
        )));
    }
    Ok(())
}

/// `Y^m(t,f) = Σ_n y^m(tH+n) F[n,f]`, computed with an FFT of the windowed frame.
pub fn stft(
    signal: &MultichannelSignal,
    kernel: &StftKernel,
    grid: FrameGrid,
) -> Result<ComplexSpectrogram> {
    check_grid(kernel, grid)?;
    let t = grid.frame_count(signal.len())?;
    let n = kernel.len();
    let bands = kernel.bands();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    let mut values = Array3::zeros((signal.channels(), t, bands));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..signal.channels() {
        let x = signal.channel(m);
        for frame in 0..t {
            let start = frame * grid.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + i] * kernel.window[i], 0.0);
            }
            fft.process(&mut buf);
            for f in 0..bands {
                values[(m, frame, f)] = buf[f];
            }
        }
    }
    Ok(ComplexSpectrogram {
        values,
        grid,
        sample_rate: signal.sample_rate(),
        signal_len: signal.len(),
    })
}

/// Literal kernel summation; slow, used as a cross-check of [`stft`].
pub fn stft_direct(
    signal: &MultichannelSignal,
    kernel: &StftKernel,
    grid: FrameGrid,
) -> Result<ComplexSpectrogram> {
    check_grid(kernel, grid)?;
    let t = grid.frame_count(signal.len())?;
    let filters = kernel.filters();
    let mut values = Array3::zeros((signal.channels(), t, kernel.bands()));
    for m in 0..signal.channels() {
        let x = signal.channel(m);
        for frame in 0..t {
            for f in 0..kernel.bands() {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..kernel.len() {
                    acc += filters[(i, f)] * x[frame * grid.hop + i];
                }
                values[(m, frame, f)] = acc;
            }
        }
    }
    Ok(ComplexSpectrogram {
        values,
        grid,
        sample_rate: signal.sample_rate(),
        signal_len: signal.len(),
    })
}

/// Overlap-add synthesis with the analysis window reused as synthesis window
/// and normalised by the summed squared window.
pub fn istft(spec: &ComplexSpectrogram, kernel: &StftKernel) -> Result<MultichannelSignal> {
    check_grid(kernel, spec.grid)?;
    let n = kernel.len();
    let bands = kernel.bands();
    if spec.bands() != bands {
        return Err(Error::shape("istft bands", bands, spec.bands()));
    }
    let (m, t, _) = spec.values.dim();
    let ifft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);
    let mut frames = Array3::zeros((m, t, n));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for ch in 0..m {
        for frame in 0..t {
            for f in 0..bands {
                buf[f] = spec.values[(ch, frame, f)];
            }
            // Hermitian extension; DC and Nyquist imaginary parts are dropped.
            buf[0].im = 0.0;
            if n.is_multiple_of(2) {
                buf[n / 2].im = 0.0;
            }
            for f in bands..n {
                buf[f] = buf[n - f].conj();
            }
            ifft.process(&mut buf);
            for i in 0..n {
                frames[(ch, frame, i)] = buf[i].re / n as f64;
            }
        }
    }
    let y = overlap_add_normalized(
        frames.view(),
        spec.grid.hop,
        kernel.window(),
        spec.sample_rate,
    )?;
    Ok(if y.len() < spec.signal_len {
        y.padded(0, spec.signal_len - y.len())
    } else {
        y
    })
}
