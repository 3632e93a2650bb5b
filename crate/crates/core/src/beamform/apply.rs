use ndarray::{Array2, Array3, ArrayView3, Axis};
use num_complex::Complex64;

use super::weights::{FdWeights, TdWeights};
use crate::dsp::{overlap_add_normalized, ComplexSpectrogram, MultichannelSignal};
use crate::error::{Error, Result};

/// `Ŝ(t,f) = w(t,f)ᴴ Y(t,f)` as a one-channel spectrogram.
pub fn apply_fd(weights: &FdWeights, spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    let (m, t, f) = spec.values.dim();
    let (wt, wf, wm) = weights.values.dim();
    if wf != f || wm != m || (wt != 1 && wt != t) {
        return Err(Error::shape(
            "fd weights",
            format!("{t}x{f}x{m}"),
            format!("{:?}", weights.values.dim()),
        ));
    }
    let out = Array2::from_shape_fn((t, f), |(ti, fi)| {
        let wi = if wt == 1 { 0 } else { ti };
        (0..m)
            .map(|c| weights.values[[wi, fi, c]].conj() * spec.values[[c, ti, fi]])
            .sum::<Complex64>()
    });
    spec.with_values(out.insert_axis(Axis(0)))
}

/// `ŝ(t,n) = w(t,n)ᵀ ȳ(t,n)` over M×T×N frames, followed by averaging
/// overlap-add.
pub fn apply_td_frames(weights: &TdWeights, frames: ArrayView3<f64>) -> Result<Array3<f64>> {
    let (m, t, n) = frames.dim();
    let (wt, ws, wm) = weights.values.dim();
    if wm != m || (wt != 1 && wt != t) || (ws != 1 && ws != n) {
        return Err(Error::shape(
            "td weights",
            format!("{t}x(1|{n})x{m}"),
            format!("{:?}", weights.values.dim()),
        ));
    }
    Ok(Array3::from_shape_fn((1, t, n), |(_, ti, ni)| {
        let w = weights.values.slice(ndarray::s![
            if wt == 1 { 0 } else { ti },
            if ws == 1 { 0 } else { ni },
            ..
        ]);
        (0..m).map(|c| w[c] * frames[[c, ti, ni]]).sum()
    }))
}

pub fn apply_td(
    weights: &TdWeights,
    frames: ArrayView3<f64>,
    hop: usize,
    sample_rate: u32,
) -> Result<MultichannelSignal> {
    let out = apply_td_frames(weights, frames)?;
    let n = frames.dim().2;
    overlap_add_normalized(out.view(), hop, &vec![1.0; n], sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FrameGrid;
    use rand::{Rng, SeedableRng};

    fn random_spec(seed: u64) -> ComplexSpectrogram {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ComplexSpectrogram {
            values: Array3::from_shape_fn((3, 4, 5), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }),
            grid: FrameGrid::new(8, 4).unwrap(),
            sample_rate: 16000,
            signal_len: 20,
        }
    }

    #[test]
    fn one_hot_and_zero_weights() {
        let spec = random_spec(1);
        let mut w = Array3::zeros((1, 5, 3));
        w.slice_mut(ndarray::s![0, .., 1])
            .fill(Complex64::new(1.0, 0.0));
        let out = apply_fd(
            &FdWeights {
                values: w,
                reference: 1,
            },
            &spec,
        )
        .unwrap();
        assert_eq!(
            out.values.index_axis(Axis(0), 0),
            spec.values.index_axis(Axis(0), 1)
        );
        let zero = apply_fd(
            &FdWeights {
                values: Array3::zeros((1, 5, 3)),
                reference: 0,
            },
            &spec,
        )
        .unwrap();
        assert!(zero.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn fd_matches_loop() {
        let spec = random_spec(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = Array3::from_shape_fn((4, 5, 3), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let out = apply_fd(
            &FdWeights {
                values: w.clone(),
                reference: 0,
            },
            &spec,
        )
        .unwrap();
        for t in 0..4 {
            for f in 0..5 {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..3 {
                    acc += w[[t, f, m]].conj() * spec.values[[m, t, f]];
                }
                assert!((acc - out.values[[0, t, f]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn td_averaging_reproduces_identical_channels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig =
            MultichannelSignal::from_channels(&[x.clone(), x.clone(), x.clone()], 16000).unwrap();
        let grid = FrameGrid::new(20, 10).unwrap();
        let frames = crate::dsp::frame(&sig, grid).unwrap();
        let w = TdWeights {
            values: Array3::from_elem((1, 1, 3), 1.0 / 3.0),
            reference: 0,
        };
        let out = apply_td(&w, frames.view(), 10, 16000).unwrap();
        for (a, b) in out.channel(0).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut u = Array3::zeros((1, 1, 3));
        u[[0, 0, 2]] = 1.0;
        let out = apply_td(
            &TdWeights {
                values: u,
                reference: 2,
            },
            frames.view(),
            10,
            16000,
        )
        .unwrap();
        assert_eq!(out.channel_vec(0), x);
    }

    #[test]
    fn td_matches_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let frames = Array3::from_shape_fn((3, 5, 8), |_| rng.gen_range(-1.0..1.0));
        let w = Array3::from_shape_fn((5, 8, 3), |_| rng.gen_range(-1.0..1.0));
        let out = apply_td_frames(
            &TdWeights {
                values: w.clone(),
                reference: 0,
            },
            frames.view(),
        )
        .unwrap();
        for t in 0..5 {
            for n in 0..8 {
                let acc: f64 = (0..3).map(|m| w[[t, n, m]] * frames[[m, t, n]]).sum();
                assert!((acc - out[[0, t, n]]).abs() < 1e-12);
            }
        }
    }
}
