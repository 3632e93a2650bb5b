//! 16 kHz WAV reading and writing (PCM16 or float32, interleaved).

use std::path::Path;

use ndarray::Array2;

use super::signal::{MultichannelSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelSignal> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Config(format!(
            "{}: sample rate {} Hz, only {SAMPLE_RATE} Hz is supported",
            path.display(),
            spec.sample_rate
        )));
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::Config(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bits",
                path.display()
            )))
        }
    };
    let len = interleaved.len() / channels.max(1);
    let samples = Array2::from_shape_fn((channels, len), |(m, k)| interleaved[k * channels + m]);
    MultichannelSignal::new(samples, spec.sample_rate)
}

pub fn write_wav(
    path: impl AsRef<Path>,
    signal: &MultichannelSignal,
    format: WavFormat,
) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: signal.channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    let x = signal.samples();
    for k in 0..signal.len() {
        for m in 0..signal.channels() {
            let v = x[(m, k)];
            match format {
                WavFormat::Float32 => writer.write_sample(v as f32),
                WavFormat::Pcm16 => {
                    writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                }
            }
            .map_err(|e| wav_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}
