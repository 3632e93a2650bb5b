//! Synthetic speech-like source material.
//!
//! Voiced segments are harmonic series with a drifting pitch shaped by three
//! formant resonances and a spectral tilt; unvoiced segments are resonant
//! noise; pauses are silent. Segment edges get 10 ms raised-cosine ramps, so
//! activity switches on and off at syllable rate.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RMS level of generated sources.
pub const SOURCE_RMS: f64 = 0.05;

fn formant_envelope(f: f64, formants: &[(f64, f64, f64)]) -> f64 {
    let peaks: f64 = formants
        .iter()
        .map(|&(fc, bw, g)| g / (1.0 + ((f - fc) / bw).powi(2)))
        .sum();
    peaks / (1.0 + f / 1000.0)
}

fn ramp(i: usize, len: usize, ramp_len: usize) -> f64 {
    let r = ramp_len.min(len / 2).max(1);
    let edge = i.min(len - 1 - i);
    if edge >= r {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / r as f64).cos()
    }
}

/// Deterministic speech-like signal of `len` samples, scaled to [`SOURCE_RMS`].
pub fn speech_like(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    let mut first = true;
    while pos < len {
        let seg = ((rng.gen_range(0.08..0.25) * fs) as usize)
            .min(len - pos)
            .max(1);
        let pick: f64 = rng.gen();
        if first || (0.25..0.85).contains(&pick) {
            let f0_start: f64 = rng.gen_range(90.0..220.0);
            let f0_end = f0_start * rng.gen_range(0.85..1.15);
            let formants = [
                (rng.gen_range(300.0..800.0), 80.0, 1.0),
                (rng.gen_range(900.0..2300.0), 120.0, 0.6),
                (rng.gen_range(2400.0..3200.0), 200.0, 0.3),
            ];
            let harmonics = (4000.0 / f0_start.max(f0_end)) as usize;
            let offsets: Vec<f64> = (0..harmonics)
                .map(|_| rng.gen_range(0.0..2.0 * PI))
                .collect();
            let mut phase = 0.0;
            for i in 0..seg {
                let f0 = f0_start + (f0_end - f0_start) * i as f64 / seg as f64;
                phase += 2.0 * PI * f0 / fs;
                let mut v = 0.0;
                for (h, off) in offsets.iter().enumerate() {
                    let k = (h + 1) as f64;
                    v += formant_envelope(k * f0, &formants) * (k * phase + off).sin();
                }
                out[pos + i] = v * ramp(i, seg, (0.01 * fs) as usize);
            }
        } else if pick >= 0.85 {
            let fc = rng.gen_range(2500.0..5000.0);
            let r: f64 = 0.97;
            let c = 2.0 * r * (2.0 * PI * fc / fs).cos();
            let (mut y1, mut y2) = (0.0, 0.0);
            for i in 0..seg {
                let e: f64 = rng.gen_range(-1.0..1.0);
                let y = e + c * y1 - r * r * y2;
                y2 = y1;
                y1 = y;
                out[pos + i] = 0.05 * y * ramp(i, seg, (0.01 * fs) as usize);
            }
        }
        first = false;
        pos += seg;
    }
    let energy: f64 = out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
    if energy > 0.0 {
        let g = SOURCE_RMS / energy.sqrt();
        out.iter_mut().for_each(|v| *v *= g);
    }
    out
}
