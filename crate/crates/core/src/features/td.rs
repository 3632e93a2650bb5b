use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{fractional_delay, frame, overlap_add_normalized, FrameGrid, MultichannelSignal};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::scene::ArrayGeometry;

pub const LD_DF_EPS: f64 = 1e-8;

/// Real analysis filters shared by all channels up to a per-channel window:
/// `K^m(n,f') = w^m(n) K0(n,f')`. The reference channel's window is pinned
/// to ones.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnableFilterBank {
    k0: Array2<f64>,
    windows: Array2<f64>,
    reference: usize,
}

impl LearnableFilterBank {
    pub fn new(k0: Array2<f64>, windows: Array2<f64>, reference: usize) -> Result<Self> {
        let n = k0.nrows();
        if windows.ncols() != n {
            return Err(Error::shape("filter bank windows", n, windows.ncols()));
        }
        if reference >= windows.nrows() {
            return Err(Error::Config(format!(
                "reference channel {reference} out of range for {} windows",
                windows.nrows()
            )));
        }
        if windows.row(reference).iter().any(|&w| w != 1.0) {
            return Err(Error::Config("reference window must be all ones".into()));
        }
        Ok(Self {
            k0,
            windows,
            reference,
        })
    }

    /// K0 uniform in `±1/√N`, all windows ones.
    pub fn random(n: usize, bands: usize, channels: usize, reference: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let k0 = Array2::from_shape_fn((n, bands), |_| rng.gen_range(-scale..scale));
        Self {
            k0,
            windows: Array2::ones((channels, n)),
            reference,
        }
    }

    pub fn window_len(&self) -> usize {
        self.k0.nrows()
    }

    pub fn bands(&self) -> usize {
        self.k0.ncols()
    }

    pub fn channels(&self) -> usize {
        self.windows.nrows()
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn k0(&self) -> ArrayView2<'_, f64> {
        self.k0.view()
    }

    pub fn windows(&self) -> ArrayView2<'_, f64> {
        self.windows.view()
    }

    /// Replaces the window of channel `m`. The reference window cannot be
    /// changed.
    pub fn set_window(&mut self, m: usize, w: &[f64]) -> Result<()> {
        if m == self.reference {
            return Err(Error::Config("reference window is fixed".into()));
        }
        if w.len() != self.window_len() {
            return Err(Error::shape("window", self.window_len(), w.len()));
        }
        self.windows.row_mut(m).assign(&Array1::from(w.to_vec()));
        Ok(())
    }

    pub fn set_k0(&mut self, k0: Array2<f64>) -> Result<()> {
        if k0.dim() != self.k0.dim() {
            return Err(Error::shape(
                "K0",
                format!("{:?}", self.k0.dim()),
                format!("{:?}", k0.dim()),
            ));
        }
        self.k0 = k0;
        Ok(())
    }

    /// Effective filters of channel `m`, N×F'.
    pub fn filters(&self, m: usize) -> Array2<f64> {
        let w = self.windows.row(m);
        let mut k = self.k0.clone();
        for (mut row, &wn) in k.rows_mut().into_iter().zip(w.iter()) {
            row *= wn;
        }
        k
    }
}

/// Real latent representation, C×T×F'.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRepresentation {
    pub values: Array3<f64>,
    pub grid: FrameGrid,
}

/// Frames each channel and applies its own filters (no activation):
/// `Y^m(t,f') = Σ_n y^m(tH+n) K^m(n,f')`.
pub fn encode(
    signal: &MultichannelSignal,
    bank: &LearnableFilterBank,
    grid: FrameGrid,
) -> Result<LatentRepresentation> {
    if grid.window != bank.window_len() {
        return Err(Error::shape(
            "encoder grid window",
            bank.window_len(),
            grid.window,
        ));
    }
    if signal.channels() != bank.channels() {
        return Err(Error::shape(
            "encoder channels",
            bank.channels(),
            signal.channels(),
        ));
    }
    let frames = frame(signal, grid)?;
    let (m, t, _) = frames.dim();
    let mut values = Array3::zeros((m, t, bank.bands()));
    for ch in 0..m {
        let y = frames.index_axis(Axis(0), ch).dot(&bank.filters(ch));
        values.index_axis_mut(Axis(0), ch).assign(&y);
    }
    Ok(LatentRepresentation { values, grid })
}

/// ReLU of the reference-channel latent.
pub fn spectral_r(latent: &LatentRepresentation, reference: usize) -> Array2<f64> {
    latent
        .values
        .index_axis(Axis(0), reference)
        .mapv(|v| v.max(0.0))
}

/// Interchannel convolution differences `Y^{p1} − Y^{p2}` per pair, P×T×F'.
pub fn icd(latent: &LatentRepresentation, pairs: &[(usize, usize)]) -> Result<Array3<f64>> {
    let (m, t, f) = latent.values.dim();
    let mut out = Array3::zeros((pairs.len(), t, f));
    for (p, &(a, b)) in pairs.iter().enumerate() {
        if a >= m || b >= m {
            return Err(Error::Config(format!(
                "pair ({a},{b}) out of range for {m} channels"
            )));
        }
        let d = &latent.values.index_axis(Axis(0), a) - &latent.values.index_axis(Axis(0), b);
        out.index_axis_mut(Axis(0), p).assign(&d);
    }
    Ok(out)
}

/// Response difference of each pair's filters to an impulse at the frame
/// start and the same impulse delayed by the pair delay for `theta`:
/// `K^{p1}(0,f') − Σ_n h_τ(n) K^{p2}(n,f')`. P×F'.
pub fn t_icd(
    bank: &LearnableFilterBank,
    geometry: &ArrayGeometry,
    theta: f64,
    sample_rate: u32,
) -> Array2<f64> {
    let n = bank.window_len();
    let mut impulse = vec![0.0; n];
    impulse[0] = 1.0;
    let mut out = Array2::zeros((geometry.pairs.len(), bank.bands()));
    for (p, &(a, b)) in geometry.pairs.iter().enumerate() {
        let tau = geometry.steering_delay(p, theta, sample_rate);
        let h = Array1::from(fractional_delay(&impulse, tau));
        let ka = bank.filters(a);
        let kb = bank.filters(b);
        let row = &ka.row(0) - &h.dot(&kb);
        out.row_mut(p).assign(&row);
    }
    out
}

/// Cosine similarity between the P-dimensional ICD vector at each unit and
/// the T-ICD vector of that latent band; in `[−1, 1]`.
pub fn ld_df(icd: ArrayView3<f64>, t_icd: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (p, t, f) = icd.dim();
    if t_icd.dim() != (p, f) {
        return Err(Error::shape(
            "ld_df template",
            format!("{p}x{f}"),
            format!("{:?}", t_icd.dim()),
        ));
    }
    let tnorm: Vec<f64> = (0..f)
        .map(|fi| t_icd.column(fi).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = Array2::zeros((t, f));
    for ti in 0..t {
        for fi in 0..f {
            let mut dot = 0.0;
            let mut nn = 0.0;
            for pi in 0..p {
                let x = icd[[pi, ti, fi]];
                dot += x * t_icd[[pi, fi]];
                nn += x * x;
            }
            out[[ti, fi]] = dot / (nn.sqrt() * tnorm[fi] + LD_DF_EPS);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TdFeatureStack {
    /// T×F', nonnegative.
    pub r: Array2<f64>,
    /// P×T×F'.
    pub icd: Array3<f64>,
    /// T×F'.
    pub ld_df: Array2<f64>,
}

impl TdFeatureStack {
    pub fn compute(
        latent: &LatentRepresentation,
        bank: &LearnableFilterBank,
        geometry: &ArrayGeometry,
        theta: f64,
        sample_rate: u32,
    ) -> Result<Self> {
        let r = spectral_r(latent, geometry.reference);
        let icd = icd(latent, &geometry.pairs)?;
        let template = t_icd(bank, geometry, theta, sample_rate);
        let ld_df = ld_df(icd.view(), template.view())?;
        Ok(Self { r, icd, ld_df })
    }

    /// `[R | ICD_1 .. ICD_P | LD-DF]` along the latent axis, T×(F'·(P+2)).
    pub fn concatenated(&self) -> Array2<f64> {
        let (t, f) = self.r.dim();
        let p = self.icd.dim().0;
        let mut out = Array2::zeros((t, f * (p + 2)));
        out.slice_mut(s![.., 0..f]).assign(&self.r);
        for pi in 0..p {
            out.slice_mut(s![.., f * (pi + 1)..f * (pi + 2)])
                .assign(&self.icd.index_axis(Axis(0), pi));
        }
        out.slice_mut(s![.., f * (p + 1)..]).assign(&self.ld_df);
        out
    }
}

/// Least-squares synthesis filters for analysis filters `K` (N×F'):
/// `D = Kᵀ (K Kᵀ)⁻¹`, F'×N, so that `K D = I` whenever F' ≥ N.
pub fn ls_decoder(filters: ArrayView2<f64>) -> Result<Array2<f64>> {
    let gram = filters.dot(&filters.t());
    let x = solve(gram.view(), filters).ok_or(Error::Singular {
        axis: "decoder",
        index: 0,
    })?;
    Ok(x.reversed_axes())
}

/// Maps each latent frame (C×T×F') to N samples through `decoder` (F'×N)
/// and overlap-adds with averaging of overlapping frames.
pub fn decode(
    latent: ArrayView3<f64>,
    decoder: ArrayView2<f64>,
    grid: FrameGrid,
    sample_rate: u32,
) -> Result<MultichannelSignal> {
    let (c, t, f) = latent.dim();
    if decoder.nrows() != f || decoder.ncols() != grid.window {
        return Err(Error::shape(
            "decoder",
            format!("{f}x{}", grid.window),
            format!("{:?}", decoder.dim()),
        ));
    }
    let mut frames = Array3::zeros((c, t, grid.window));
    for ch in 0..c {
        frames
            .index_axis_mut(Axis(0), ch)
            .assign(&latent.index_axis(Axis(0), ch).dot(&decoder));
    }
    overlap_add_normalized(
        frames.view(),
        grid.hop,
        &vec![1.0; grid.window],
        sample_rate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::si_sdr;

    fn noise(seed: u64, channels: usize, len: usize) -> MultichannelSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Array2::from_shape_fn((channels, len), |_| rng.gen_range(-1.0..1.0));
        MultichannelSignal::new(s, 16000).unwrap()
    }

    fn random_windows(bank: &mut LearnableFilterBank, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in 0..bank.channels() {
            if m != bank.reference() {
                let w: Vec<f64> = (0..bank.window_len())
                    .map(|_| rng.gen_range(0.5..1.5))
                    .collect();
                bank.set_window(m, &w).unwrap();
            }
        }
    }

    #[test]
    fn encode_matches_double_loop() {
        let grid = FrameGrid::new(40, 20).unwrap();
        let mut bank = LearnableFilterBank::random(40, 16, 3, 0, 5);
        random_windows(&mut bank, 6);
        let sig = noise(7, 3, 200);
        let lat = encode(&sig, &bank, grid).unwrap();
        for m in 0..3 {
            for t in 0..lat.values.dim().1 {
                for f in 0..16 {
                    let mut acc = 0.0;
                    for n in 0..40 {
                        acc +=
                            sig.channel(m)[t * 20 + n] * bank.windows()[[m, n]] * bank.k0()[[n, f]];
                    }
                    assert!((acc - lat.values[[m, t, f]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_hot_filters_reproduce_frames() {
        let grid = FrameGrid::new(4, 2).unwrap();
        let bank = LearnableFilterBank::new(Array2::eye(4), Array2::ones((1, 4)), 0).unwrap();
        let sig = MultichannelSignal::mono((0..10).map(f64::from).collect(), 16000).unwrap();
        let lat = encode(&sig, &bank, grid).unwrap();
        assert_eq!(
            lat.values.slice(s![0, 1, ..]).to_vec(),
            vec![2.0, 3.0, 4.0, 5.0]
        );
        let zero = encode(&MultichannelSignal::zeros(1, 10, 16000), &bank, grid).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reference_window_is_pinned() {
        let mut bank = LearnableFilterBank::random(8, 4, 2, 0, 1);
        assert!(bank.set_window(0, &[2.0; 8]).is_err());
        assert!(
            LearnableFilterBank::new(Array2::ones((8, 4)), Array2::from_elem((2, 8), 2.0), 0)
                .is_err()
        );
        bank.set_window(1, &[2.0; 8]).unwrap();
        assert_eq!(bank.filters(1), bank.filters(0) * 2.0);
    }

    #[test]
    fn relu_feature() {
        let lat = LatentRepresentation {
            values: Array3::from_shape_vec((1, 1, 4), vec![-1.0, 0.0, 2.0, -0.5]).unwrap(),
            grid: FrameGrid::new(4, 2).unwrap(),
        };
        assert_eq!(
            spectral_r(&lat, 0).row(0).to_vec(),
            vec![0.0, 0.0, 2.0, 0.0]
        );
    }

    #[test]
    fn t_icd_against_interpolation_oracle() {
        let mut bank = LearnableFilterBank::random(40, 32, 2, 0, 3);
        random_windows(&mut bank, 4);
        let tau: f64 = 6.9971;
        let d = tau * 343.0 / 16000.0;
        let g = ArrayGeometry::new(vec![0.0, d], vec![(0, 1)], 0, 343.0).unwrap();
        let t = t_icd(&bank, &g, 0.0, 16000);
        for f in 0..32 {
            let mut expect = bank.filters(0)[[0, f]];
            for n in 0..40 {
                expect -= crate::dsp::kaiser_sinc_tap(n as f64 - tau) * bank.filters(1)[[n, f]];
            }
            assert!((t[[0, f]] - expect).abs() < 1e-12);
        }
        let broadside = t_icd(
            &LearnableFilterBank::random(40, 32, 2, 0, 3),
            &g,
            90.0,
            16000,
        );
        assert!(broadside.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn icd_of_delayed_impulse_equals_t_icd() {
        let g = ArrayGeometry::default_linear8();
        let mut bank = LearnableFilterBank::random(40, 24, 8, 0, 11);
        random_windows(&mut bank, 12);
        let grid = FrameGrid::new(40, 20).unwrap();
        let theta = 37.0;
        let len = 400;
        let start = 100;
        let template = t_icd(&bank, &g, theta, 16000);
        for (p, &(a, b)) in g.pairs.iter().enumerate() {
            let mut chans = vec![vec![0.0; len]; 8];
            chans[a][start] = 1.0;
            chans[b] = fractional_delay(&chans[a], g.steering_delay(p, theta, 16000));
            let sig = MultichannelSignal::from_channels(&chans, 16000).unwrap();
            let lat = encode(&sig, &bank, grid).unwrap();
            let d = icd(&lat, &g.pairs).unwrap();
            for f in 0..24 {
                let err = (d[[p, start / 20, f]] - template[[p, f]]).abs();
                assert!(err < 1e-6, "pair {p} band {f} err {err}");
            }
        }
    }

    #[test]
    fn ld_df_bounds() {
        let t = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        let i = Array3::from_shape_vec((2, 2, 1), vec![2.0, -1.0, 4.0, -2.0]).unwrap();
        let d = ld_df(i.view(), t.view()).unwrap();
        assert!((d[[0, 0]] - 1.0).abs() < 1e-8);
        assert!((d[[1, 0]] + 1.0).abs() < 1e-8);
        let z = ld_df(Array3::zeros((2, 1, 1)).view(), t.view()).unwrap();
        assert_eq!(z[[0, 0]], 0.0);
    }

    #[test]
    fn ls_decoder_round_trip() {
        let grid = FrameGrid::new(40, 20).unwrap();
        let bank = LearnableFilterBank::random(40, 64, 1, 0, 21);
        let dec = ls_decoder(bank.filters(0).view()).unwrap();
        let sig = noise(22, 1, 800);
        let lat = encode(&sig, &bank, grid).unwrap();
        let out = decode(lat.values.view(), dec.view(), grid, 16000).unwrap();
        let x = sig.channel_vec(0);
        let y = out.channel_vec(0);
        assert!(si_sdr(&y, &x).unwrap() > 20.0);
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn transpose_decoder_is_identity_without_overlap() {
        let grid = FrameGrid::new(4, 4).unwrap();
        let lat = Array3::from_shape_fn((1, 3, 4), |(_, t, f)| (t * 4 + f) as f64);
        let out = decode(lat.view(), Array2::eye(4).view(), grid, 16000).unwrap();
        assert_eq!(
            out.channel_vec(0),
            (0..12).map(f64::from).collect::<Vec<_>>()
        );
    }
}
