use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fractional_delay, ComplexSpectrogram, StftKernel};
use crate::error::{Error, Result};
use crate::scene::ArrayGeometry;

pub const MAGNITUDE_FLOOR: f64 = 1e-8;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Log power spectrum of one channel in dB: `20 log10 max(|Y|, 1e-8)`.
pub fn lps(spec: &ComplexSpectrogram, channel: usize) -> Array2<f64> {
    spec.values
        .index_axis(Axis(0), channel)
        .mapv(|v| 20.0 * v.norm().max(MAGNITUDE_FLOOR).log10())
}

/// `∠Y^{p1} − ∠Y^{p2}` per pair, wrapped. Shape P×T×F.
pub fn ipd(spec: &ComplexSpectrogram, pairs: &[(usize, usize)]) -> Result<Array3<f64>> {
    let m = spec.channels();
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= m || b >= m) {
        return Err(Error::Config(format!(
            "pair ({a},{b}) out of range for {m} channels"
        )));
    }
    let (t, f) = (spec.frames(), spec.bands());
    let mut out = Array3::zeros((pairs.len(), t, f));
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let ya = spec.values.index_axis(Axis(0), a);
        let yb = spec.values.index_axis(Axis(0), b);
        ndarray::Zip::from(out.index_axis_mut(Axis(0), p))
            .and(&ya)
            .and(&yb)
            .for_each(|o, &x, &y| *o = wrap_phase(x.arg() - y.arg()));
    }
    Ok(out)
}

/// Expected per-pair phase differences for a plane wave from `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPhaseTemplate {
    /// P×F, radians.
    pub t_ipd: Array2<f64>,
    pub theta: f64,
}

/// Phase difference a unit impulse experiences between each pair's
/// microphones: the analysis kernel is applied to an impulse and to the same
/// impulse fractionally delayed by the pair delay, and the phases subtracted.
/// The impulse sits mid-frame so the analysis window does not null it.
pub fn t_ipd(
    geometry: &ArrayGeometry,
    theta: f64,
    kernel: &StftKernel,
    sample_rate: u32,
) -> TargetPhaseTemplate {
    let n = kernel.len();
    let bands = kernel.bands();
    let centre = n / 2;
    let mut impulse = vec![0.0; n];
    impulse[centre] = 1.0;
    let analyse = |x: &[f64]| -> Vec<Complex64> {
        (0..bands)
            .map(|f| {
                x.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, &v)| kernel.coefficient(i, f) * v)
                    .sum()
            })
            .collect()
    };
    let direct = analyse(&impulse);
    let mut t = Array2::zeros((geometry.pairs.len(), bands));
    for p in 0..geometry.pairs.len() {
        let tau = geometry.steering_delay(p, theta, sample_rate);
        let delayed = analyse(&fractional_delay(&impulse, tau));
        for f in 0..bands {
            t[[p, f]] = wrap_phase(direct[f].arg() - delayed[f].arg());
        }
    }
    TargetPhaseTemplate { t_ipd: t, theta }
}

/// Closed form `wrap(2π f τ / N)` of [`t_ipd`].
pub fn t_ipd_analytic(
    geometry: &ArrayGeometry,
    theta: f64,
    window: usize,
    sample_rate: u32,
) -> TargetPhaseTemplate {
    let bands = window / 2 + 1;
    let t = Array2::from_shape_fn((geometry.pairs.len(), bands), |(p, f)| {
        let tau = geometry.steering_delay(p, theta, sample_rate);
        wrap_phase(2.0 * PI * f as f64 * tau / window as f64)
    });
    TargetPhaseTemplate { t_ipd: t, theta }
}

/// `Σ_p cos(IPD^p(t,f) − T-IPD^p(f))`, in `[−P, P]`.
pub fn fd_df(ipd: ArrayView3<f64>, template: &TargetPhaseTemplate) -> Result<Array2<f64>> {
    let (p, t, f) = ipd.dim();
    if template.t_ipd.dim() != (p, f) {
        return Err(Error::shape(
            "fd_df template",
            format!("{p}x{f}"),
            format!("{:?}", template.t_ipd.dim()),
        ));
    }
    let mut out = Array2::zeros((t, f));
    for pi in 0..p {
        let tpl = template.t_ipd.row(pi);
        for ti in 0..t {
            for fi in 0..f {
                out[[ti, fi]] += (ipd[[pi, ti, fi]] - tpl[fi]).cos();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IpdEncoding {
    Angle,
    #[default]
    CosSin,
}

impl IpdEncoding {
    pub fn width(self) -> usize {
        match self {
            IpdEncoding::Angle => 1,
            IpdEncoding::CosSin => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdFeatureStack {
    /// T×F.
    pub lps: Array2<f64>,
    /// P×T×F.
    pub ipd: Array3<f64>,
    /// T×F.
    pub fd_df: Array2<f64>,
}

impl FdFeatureStack {
    pub fn compute(
        spec: &ComplexSpectrogram,
        geometry: &ArrayGeometry,
        theta: f64,
        kernel: &StftKernel,
    ) -> Result<Self> {
        let lps = lps(spec, geometry.reference);
        let ipd = ipd(spec, &geometry.pairs)?;
        let template = t_ipd(geometry, theta, kernel, spec.sample_rate);
        let fd_df = fd_df(ipd.view(), &template)?;
        Ok(Self { lps, ipd, fd_df })
    }

    /// Features joined along frequency: `[LPS | IPD_1 .. IPD_P | FD-DF]`,
    /// T×(F·(2 + P·c)).
    pub fn concatenated(&self, encoding: IpdEncoding) -> Array2<f64> {
        let (t, f) = self.lps.dim();
        let p = self.ipd.dim().0;
        let width = f * (2 + p * encoding.width());
        let mut out = Array2::zeros((t, width));
        out.slice_mut(s![.., 0..f]).assign(&self.lps);
        let mut col = f;
        for pi in 0..p {
            let plane = self.ipd.index_axis(Axis(0), pi);
            match encoding {
                IpdEncoding::Angle => {
                    out.slice_mut(s![.., col..col + f]).assign(&plane);
                    col += f;
                }
                IpdEncoding::CosSin => {
                    out.slice_mut(s![.., col..col + f])
                        .assign(&plane.mapv(f64::cos));
                    out.slice_mut(s![.., col + f..col + 2 * f])
                        .assign(&plane.mapv(f64::sin));
                    col += 2 * f;
                }
            }
        }
        out.slice_mut(s![.., col..col + f]).assign(&self.fd_df);
        out
    }
}

/// Boolean map of units whose value exceeds the given percentile (0–100) of
/// all values.
pub fn active_units(values: ArrayView2<f64>, percentile: f64) -> Array2<bool> {
    let mut sorted: Vec<f64> = values.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return Array2::from_elem(values.dim(), false);
    }
    let idx = ((percentile / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    let threshold = sorted[idx.min(sorted.len() - 1)];
    values.mapv(|v| v > threshold)
}

/// Mean of `values` over units where `mask` is set; NaN if none are.
pub fn masked_mean(values: ArrayView2<f64>, mask: &Array2<bool>) -> f64 {
    let (sum, count) = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    sum / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, FrameGrid, MultichannelSignal};
    use rand::{Rng, SeedableRng};

    fn grid() -> FrameGrid {
        FrameGrid::new(512, 256).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_phase(-4.0) - (2.0 * PI - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn lps_values() {
        let g = FrameGrid::new(4, 4).unwrap();
        let mut values = Array3::from_elem((1, 2, 3), Complex64::new(10.0, 0.0));
        values[[0, 1, 0]] = Complex64::new(0.0, 0.0);
        values[[0, 1, 1]] = Complex64::new(0.0, 1.0);
        let spec = ComplexSpectrogram {
            values,
            grid: g,
            sample_rate: 16000,
            signal_len: 8,
        };
        let l = lps(&spec, 0);
        assert!((l[[0, 0]] - 20.0).abs() < 1e-12);
        assert!((l[[1, 0]] + 160.0).abs() < 1e-12);
        assert!(l[[1, 1]].abs() < 1e-12);
    }

    #[test]
    fn ipd_of_integer_delay() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let len = 4096;
        let d = 5usize;
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; len];
        y[d..].copy_from_slice(&x[..len - d]);
        let sig = MultichannelSignal::from_channels(&[x, y], 16000).unwrap();
        let k = StftKernel::sqrt_hann(512);
        let spec = stft(&sig, &k, grid()).unwrap();
        let ipd = ipd(&spec, &[(0, 1), (1, 0)]).unwrap();
        // Frame-local shift: compare in the bins where the wrapped shift theorem
        // holds, weighting by energy is unnecessary for white input at d << N.
        let mut err = 0.0;
        let mut count = 0;
        for t in 2..spec.frames() - 2 {
            for f in 1..200 {
                let expect = wrap_phase(2.0 * PI * f as f64 * d as f64 / 512.0);
                err += wrap_phase(ipd[[0, t, f]] - expect).abs();
                count += 1;
                assert!((wrap_phase(ipd[[0, t, f]] + ipd[[1, t, f]])).abs() < 1e-12);
            }
        }
        assert!(
            err / (count as f64) < 0.1,
            "mean error {}",
            err / count as f64
        );
    }

    #[test]
    fn template_examples() {
        let g = ArrayGeometry::default_linear8();
        let k = StftKernel::sqrt_hann(512);
        let broadside = t_ipd(&g, 90.0, &k, 16000);
        assert!(broadside.t_ipd.iter().all(|v| v.abs() < 1e-9));
        let end = t_ipd(&g, 0.0, &k, 16000);
        assert!(end.t_ipd.column(0).iter().all(|v| v.abs() < 1e-12));

        let close = ArrayGeometry::new(vec![0.0, 0.05], vec![(0, 1)], 0, 343.0).unwrap();
        let t = t_ipd_analytic(&close, 0.0, 512, 16000);
        let tau: f64 = 0.05 * 16000.0 / 343.0;
        assert!((tau - 2.3324).abs() < 1e-4);
        let expect = wrap_phase(2.0 * PI * 64.0 * tau / 512.0);
        assert!((t.t_ipd[[0, 64]] - expect).abs() < 1e-12);
        assert!((expect - 1.8326).abs() < 1e-3);
        let lit = t_ipd(&close, 0.0, &k, 16000);
        assert!((lit.t_ipd[[0, 64]] - t.t_ipd[[0, 64]]).abs() < 1e-3);
    }

    #[test]
    fn fd_df_extremes() {
        let template = TargetPhaseTemplate {
            t_ipd: Array2::from_shape_fn((3, 4), |(p, f)| 0.3 * p as f64 - 0.1 * f as f64),
            theta: 0.0,
        };
        let same = Array3::from_shape_fn((3, 2, 4), |(p, _, f)| template.t_ipd[[p, f]]);
        let df = fd_df(same.view(), &template).unwrap();
        assert!(df.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let opposite = same.mapv(|v| wrap_phase(v + PI));
        let df = fd_df(opposite.view(), &template).unwrap();
        assert!(df.iter().all(|v| (v + 3.0).abs() < 1e-12));
    }

    #[test]
    fn concatenated_width() {
        let stack = FdFeatureStack {
            lps: Array2::ones((3, 5)),
            ipd: Array3::zeros((2, 3, 5)),
            fd_df: Array2::from_elem((3, 5), 2.0),
        };
        let c = stack.concatenated(IpdEncoding::CosSin);
        assert_eq!(c.dim(), (3, 5 * (2 + 2 * 2)));
        assert_eq!(c[[0, 5]], 1.0);
        assert_eq!(c[[0, 10]], 0.0);
        assert_eq!(c[[2, 29]], 2.0);
        assert_eq!(stack.concatenated(IpdEncoding::Angle).dim(), (3, 20));
    }
}
