use std::f64::consts::PI;
use std::fmt::Write;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use super::weights::{FdWeights, TdWeights};
use crate::error::{Error, Result};
use crate::scene::ArrayGeometry;

pub const PATTERN_FLOOR_DB: f64 = -60.0;

fn steering(geometry: &ArrayGeometry, f_hz: f64, theta: f64) -> Vec<Complex64> {
    (0..geometry.channels())
        .map(|m| {
            Complex64::from_polar(
                1.0,
                -2.0 * PI * f_hz * geometry.channel_delay_seconds(m, theta),
            )
        })
        .collect()
}

/// `|Σ_m w_m* e^{−j2πfτ_m(θ)}|` over `thetas × freqs_hz`, using the weights
/// of the bin nearest to each frequency.
pub fn fd_beam_pattern(
    weights: &FdWeights,
    frame: usize,
    geometry: &ArrayGeometry,
    freqs_hz: &[f64],
    thetas: &[f64],
    sample_rate: u32,
) -> Result<Array2<f64>> {
    let (t, bands, m) = weights.values.dim();
    if m != geometry.channels() {
        return Err(Error::shape("pattern weights", geometry.channels(), m));
    }
    if frame >= t {
        return Err(Error::Config(format!(
            "frame {frame} out of range ({t} frames)"
        )));
    }
    let n = 2 * (bands - 1);
    let mut out = Array2::zeros((thetas.len(), freqs_hz.len()));
    for (fi, &f_hz) in freqs_hz.iter().enumerate() {
        let bin = (f_hz * n as f64 / sample_rate as f64).round() as usize;
        if bin >= bands {
            return Err(Error::Config(format!("{f_hz} Hz is above Nyquist")));
        }
        let w = weights.values.slice(ndarray::s![frame, bin, ..]);
        for (ti, &theta) in thetas.iter().enumerate() {
            let v = steering(geometry, f_hz, theta);
            let r: Complex64 = w.iter().zip(&v).map(|(w, v)| w.conj() * v).sum();
            out[[ti, fi]] = r.norm();
        }
    }
    Ok(out)
}

/// Pattern of real spatial weights: `|Σ_m w_m e^{−j2πfτ_m(θ)}|`. With
/// `frame = None` the weights are averaged over frames (and samples).
pub fn td_beam_pattern(
    weights: &TdWeights,
    frame: Option<usize>,
    geometry: &ArrayGeometry,
    freqs_hz: &[f64],
    thetas: &[f64],
) -> Result<Array2<f64>> {
    let per_frame = weights.frame_weights();
    let w: Array1<f64> = match frame {
        Some(t) if t < per_frame.nrows() => per_frame.row(t).to_owned(),
        Some(t) => return Err(Error::Config(format!("frame {t} out of range"))),
        None => per_frame.mean_axis(Axis(0)).expect("at least one frame"),
    };
    if w.len() != geometry.channels() {
        return Err(Error::shape(
            "pattern weights",
            geometry.channels(),
            w.len(),
        ));
    }
    let mut out = Array2::zeros((thetas.len(), freqs_hz.len()));
    for (fi, &f_hz) in freqs_hz.iter().enumerate() {
        for (ti, &theta) in thetas.iter().enumerate() {
            let v = steering(geometry, f_hz, theta);
            let r: Complex64 = w.iter().zip(&v).map(|(w, v)| v * *w).sum();
            out[[ti, fi]] = r.norm();
        }
    }
    Ok(out)
}

/// [`td_beam_pattern`] resampled per frequency onto the spatial-frequency
/// axis `κ = f cos θ` (Hz): entry `[k, i]` is the gain at `freqs_hz[i]` and
/// `θ = acos(κ_k / f_i)`. Instantaneous real weights give a pattern that
/// depends on `f cos θ` only, so the columns coincide. Every `|κ|` must be
/// at most the lowest frequency.
pub fn td_pattern_by_spatial_frequency(
    weights: &TdWeights,
    frame: Option<usize>,
    geometry: &ArrayGeometry,
    freqs_hz: &[f64],
    kappa_hz: &[f64],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((kappa_hz.len(), freqs_hz.len()));
    for (fi, &f_hz) in freqs_hz.iter().enumerate() {
        if let Some(k) = kappa_hz.iter().find(|k| k.abs() > f_hz) {
            return Err(Error::Config(format!("spatial frequency {k} Hz exceeds {f_hz} Hz")));
        }
        let thetas: Vec<f64> = kappa_hz.iter().map(|k| (k / f_hz).acos().to_degrees()).collect();
        let column = td_beam_pattern(weights, frame, geometry, &[f_hz], &thetas)?;
        out.column_mut(fi).assign(&column.column(0));
    }
    Ok(out)
}

/// CSV with a `theta_deg` column and one column per frequency; gains in dB
/// floored at −60.
pub fn pattern_csv(thetas: &[f64], freqs_hz: &[f64], gains: &Array2<f64>) -> String {
    let mut s = String::from("theta_deg");
    for f in freqs_hz {
        let _ = write!(s, ",{f}");
    }
    s.push('\n');
    for (ti, theta) in thetas.iter().enumerate() {
        let _ = write!(s, "{theta}");
        for fi in 0..freqs_hz.len() {
            let g = gains[[ti, fi]];
            let db = if g > 0.0 {
                (20.0 * g.log10()).max(PATTERN_FLOOR_DB)
            } else {
                PATTERN_FLOOR_DB
            };
            let _ = write!(s, ",{db:.4}");
        }
        s.push('\n');
    }
    s
}
