use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::scm::{FdScm, TdScm};
use crate::error::{Error, Result};
use crate::linalg::{
    diagonal_load, inner, principal_eigenvector, solve_vec, Scalar, DIAGONAL_LOADING,
};

/// Complex filter-and-sum weights, T×F×M (T = 1 when time-invariant).
#[derive(Debug, Clone, PartialEq)]
pub struct FdWeights {
    pub values: Array3<Complex64>,
    pub reference: usize,
}

impl FdWeights {
    pub fn is_time_invariant(&self) -> bool {
        self.values.dim().0 == 1
    }
}

/// Real spatial weights, T×S×M: S = 1 for frame-constant weights, S = N for
/// per-sample weights; T = 1 broadcasts over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TdWeights {
    pub values: Array3<f64>,
    pub reference: usize,
}

impl TdWeights {
    /// One weight vector per frame (per-sample weights averaged over n).
    pub fn frame_weights(&self) -> Array2<f64> {
        self.values
            .mean_axis(Axis(1))
            .expect("non-empty sample axis")
    }
}

/// MVDR direction `Φ⁻¹v / (vᴴΦ⁻¹v)` rescaled so that `wᴴv = v_ref`.
fn mvdr<T: Scalar>(noise: ArrayView2<T>, v: &Array1<T>, reference: usize) -> Option<Array1<T>> {
    let loaded = diagonal_load(&noise.to_owned(), DIAGONAL_LOADING);
    let x = solve_vec(loaded.view(), v.view())?;
    let denom = inner(v.view(), x.view());
    if denom.abs() == 0.0 || !denom.is_finite() {
        return None;
    }
    let scale = v[reference].conj() / denom.conj();
    let w = x.mapv(|e| e * scale);
    w.iter().all(|e| e.is_finite()).then_some(w)
}

/// `(Φ + loading)⁻¹ r`.
fn wiener<T: Scalar>(mix: ArrayView2<T>, cross: Array1<T>) -> Option<Array1<T>> {
    let loaded = diagonal_load(&mix.to_owned(), DIAGONAL_LOADING);
    let w = solve_vec(loaded.view(), cross.view())?;
    w.iter().all(|e| e.is_finite()).then_some(w)
}

fn check_aggregated(scm: &FdScm, ctx: &str) -> Result<()> {
    if scm.values.dim().0 != 1 {
        return Err(Error::Config(format!(
            "{ctx}: expected time-aggregated statistics"
        )));
    }
    Ok(())
}

/// Time-invariant MVDR per frequency. The steering vector is the principal
/// eigenvector of `Φss(f)` with its reference component real and nonnegative.
pub fn fd_eq_mvdr(phi_nn: &FdScm, phi_ss: &FdScm, reference: usize) -> Result<FdWeights> {
    check_aggregated(phi_nn, "fd_eq_mvdr")?;
    check_aggregated(phi_ss, "fd_eq_mvdr")?;
    let (_, f, m, _) = phi_nn.values.dim();
    let rows: Vec<Result<Array1<Complex64>>> = (0..f)
        .into_par_iter()
        .map(|fi| {
            let ss = phi_ss.values.slice(ndarray::s![0, fi, .., ..]);
            let nn = phi_nn.values.slice(ndarray::s![0, fi, .., ..]);
            let (v, _) = principal_eigenvector(ss, reference);
            mvdr(nn, &v, reference).ok_or(Error::Singular {
                axis: "frequency",
                index: fi,
            })
        })
        .collect();
    stack_fd(rows, m, reference)
}

/// Time-invariant Wiener filter `Φyy⁻¹ Φys u` per frequency.
pub fn fd_eq_mcwf(phi_yy: &FdScm, phi_ys: &FdScm, reference: usize) -> Result<FdWeights> {
    check_aggregated(phi_yy, "fd_eq_mcwf")?;
    check_aggregated(phi_ys, "fd_eq_mcwf")?;
    let (_, f, m, _) = phi_yy.values.dim();
    let rows: Vec<Result<Array1<Complex64>>> = (0..f)
        .into_par_iter()
        .map(|fi| {
            let yy = phi_yy.values.slice(ndarray::s![0, fi, .., ..]);
            let ys = phi_ys
                .values
                .slice(ndarray::s![0, fi, .., reference])
                .to_owned();
            wiener(yy, ys).ok_or(Error::Singular {
                axis: "frequency",
                index: fi,
            })
        })
        .collect();
    stack_fd(rows, m, reference)
}

fn stack_fd(rows: Vec<Result<Array1<Complex64>>>, m: usize, reference: usize) -> Result<FdWeights> {
    let f = rows.len();
    let mut values = Array3::zeros((1, f, m));
    for (fi, r) in rows.into_iter().enumerate() {
        values.slice_mut(ndarray::s![0, fi, ..]).assign(&r?);
    }
    Ok(FdWeights { values, reference })
}

fn check_td_pair(a: &TdScm, b: &TdScm, ctx: &'static str) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::shape(
            ctx,
            format!("{:?}", a.values.dim()),
            format!("{:?}", b.values.dim()),
        ));
    }
    Ok(())
}

/// Solves once per matrix slot of T×S×M×M statistics, in parallel over
/// frames; the output keeps the T×S layout.
fn per_slot<F>(t: usize, s: usize, m: usize, reference: usize, solve: F) -> Result<TdWeights>
where
    F: Fn(usize, usize) -> Option<Array1<f64>> + Sync,
{
    let frames: Vec<Result<Array2<f64>>> = (0..t)
        .into_par_iter()
        .map(|ti| {
            let mut plane = Array2::zeros((s, m));
            for si in 0..s {
                let w = solve(ti, si).ok_or(Error::Singular {
                    axis: "frame",
                    index: ti,
                })?;
                plane.row_mut(si).assign(&w);
            }
            Ok(plane)
        })
        .collect();
    let mut values = Array3::zeros((t, s, m));
    for (ti, plane) in frames.into_iter().enumerate() {
        values.index_axis_mut(Axis(0), ti).assign(&plane?);
    }
    Ok(TdWeights { values, reference })
}

/// Time-domain MVDR: `h` is the principal eigenvector of `Rss` and the
/// weights satisfy `wᵀh = h_ref`. One weight vector per statistics slot
/// (per sample, per frame, or global).
pub fn td_eq_mvdr(r_nn: &TdScm, r_ss: &TdScm, reference: usize) -> Result<TdWeights> {
    check_td_pair(r_nn, r_ss, "td_eq_mvdr statistics")?;
    let (t, s, m, _) = r_nn.values.dim();
    per_slot(t, s, m, reference, |ti, si| {
        let ss = r_ss.values.slice(ndarray::s![ti, si, .., ..]);
        let (h, _) = principal_eigenvector(ss, reference);
        mvdr(
            r_nn.values.slice(ndarray::s![ti, si, .., ..]),
            &h,
            reference,
        )
    })
}

/// `Ryy⁻¹ Rys u` for every statistics slot.
pub fn td_eq_mcwf(r_yy: &TdScm, r_ys: &TdScm, reference: usize) -> Result<TdWeights> {
    check_td_pair(r_yy, r_ys, "td_eq_mcwf statistics")?;
    let (t, s, m, _) = r_yy.values.dim();
    per_slot(t, s, m, reference, |ti, si| {
        let cross = r_ys
            .values
            .slice(ndarray::s![ti, si, .., reference])
            .to_owned();
        wiener(r_yy.values.slice(ndarray::s![ti, si, .., ..]), cross)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentVariant {
    /// One weight vector per latent band, statistics summed over frames.
    TimeInvariant,
    /// One weight vector per frame and band from that unit's own statistics.
    TimeVariant,
}

/// Real Wiener weights in the latent domain from the multichannel latent
/// mixture (M×T×F') and a single-channel target estimate (T×F'). Returns
/// T×F'×M weights (T = 1 for the time-invariant variant).
pub fn latent_eq_mcwf(
    mixture: ArrayView3<f64>,
    target: ArrayView2<f64>,
    variant: LatentVariant,
) -> Result<Array3<f64>> {
    let (m, t, f) = mixture.dim();
    if target.dim() != (t, f) {
        return Err(Error::shape(
            "latent target",
            format!("{t}x{f}"),
            format!("{:?}", target.dim()),
        ));
    }
    match variant {
        LatentVariant::TimeInvariant => {
            let cols: Vec<Result<Array1<f64>>> = (0..f)
                .into_par_iter()
                .map(|fi| {
                    let mut yy = Array2::<f64>::zeros((m, m));
                    let mut ys = Array1::<f64>::zeros(m);
                    for ti in 0..t {
                        let y = mixture.slice(ndarray::s![.., ti, fi]);
                        for i in 0..m {
                            ys[i] += y[i] * target[[ti, fi]];
                            for k in 0..m {
                                yy[[i, k]] += y[i] * y[k];
                            }
                        }
                    }
                    wiener(yy.view(), ys).ok_or(Error::Singular {
                        axis: "latent band",
                        index: fi,
                    })
                })
                .collect();
            let mut out = Array3::zeros((1, f, m));
            for (fi, c) in cols.into_iter().enumerate() {
                out.slice_mut(ndarray::s![0, fi, ..]).assign(&c?);
            }
            Ok(out)
        }
        LatentVariant::TimeVariant => {
            let planes: Vec<Result<Array2<f64>>> = (0..t)
                .into_par_iter()
                .map(|ti| {
                    let mut plane = Array2::zeros((f, m));
                    for fi in 0..f {
                        let y = mixture.slice(ndarray::s![.., ti, fi]).to_owned();
                        let yy = Array2::from_shape_fn((m, m), |(i, k)| y[i] * y[k]);
                        let ys = y.mapv(|v| v * target[[ti, fi]]);
                        let w = wiener(yy.view(), ys).ok_or(Error::Singular {
                            axis: "frame",
                            index: ti,
                        })?;
                        plane.row_mut(fi).assign(&w);
                    }
                    Ok(plane)
                })
                .collect();
            let mut out = Array3::zeros((t, f, m));
            for (ti, plane) in planes.into_iter().enumerate() {
                out.index_axis_mut(Axis(0), ti).assign(&plane?);
            }
            Ok(out)
        }
    }
}

/// `ŝ(t,f') = w(t,f')ᵀ Y(t,f')`; time-invariant weights broadcast over t.
pub fn apply_latent(weights: ArrayView3<f64>, mixture: ArrayView3<f64>) -> Result<Array2<f64>> {
    let (m, t, f) = mixture.dim();
    let (wt, wf, wm) = weights.dim();
    if wf != f || wm != m || (wt != 1 && wt != t) {
        return Err(Error::shape(
            "latent weights",
            format!("{t}x{f}x{m}"),
            format!("{:?}", weights.dim()),
        ));
    }
    Ok(Array2::from_shape_fn((t, f), |(ti, fi)| {
        let w = weights.slice(ndarray::s![if wt == 1 { 0 } else { ti }, fi, ..]);
        (0..m).map(|i| w[i] * mixture[[i, ti, fi]]).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::scm::{Averaging, ScmKind};
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};

    fn fd_scm_from(values: Array2<Complex64>, kind: ScmKind) -> FdScm {
        let m = values.nrows();
        FdScm {
            kind,
            values: values.into_shape_with_order((1, 1, m, m)).unwrap(),
            aggregated: true,
        }
    }

    #[test]
    fn identity_noise_is_matched_filter() {
        let v = Array1::from(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.5, -0.5),
        ]);
        let ss = Array2::from_shape_fn((3, 3), |(i, k)| v[i] * v[k].conj());
        let w = fd_eq_mvdr(
            &fd_scm_from(Array2::eye(3), ScmKind::Nn),
            &fd_scm_from(ss, ScmKind::Ss),
            0,
        )
        .unwrap();
        let norm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        for i in 0..3 {
            let expect = v[i] * v[0].conj() / norm2;
            assert!((w.values[[0, 0, i]] - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_target_gives_zero_wiener_weights() {
        let yy = fd_scm_from(Array2::eye(2), ScmKind::Yy);
        let ys = fd_scm_from(Array2::zeros((2, 2)), ScmKind::Ys);
        let w = fd_eq_mcwf(&yy, &ys, 0).unwrap();
        assert!(w.values.iter().all(|v| v.norm() == 0.0));
        let lat = Array3::from_elem((2, 3, 4), 1.0);
        let z = latent_eq_mcwf(
            lat.view(),
            Array2::zeros((3, 4)).view(),
            LatentVariant::TimeVariant,
        )
        .unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wiener_solve_residual() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let y = Array3::from_shape_fn((4, 50, 3), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let s = y.mapv(|v| v * 0.5);
        let yy = crate::beamform::fd_scm(y.view(), y.view(), ScmKind::Yy, true).unwrap();
        let ys = crate::beamform::fd_scm(y.view(), s.view(), ScmKind::Ys, true).unwrap();
        let w = fd_eq_mcwf(&yy, &ys, 1).unwrap();
        for f in 0..3 {
            let phi = yy.values.slice(ndarray::s![0, f, .., ..]);
            let loaded: Array2<Complex64> = diagonal_load(&phi.to_owned(), DIAGONAL_LOADING);
            let r: Array1<Complex64> = loaded.dot(&w.values.slice(ndarray::s![0, f, ..]))
                - &ys.values.slice(ndarray::s![0, f, .., 1]);
            assert!(r.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-8);
        }
    }

    #[test]
    fn broadside_mvdr_is_delay_and_sum() {
        let m = 4;
        let ones = Array2::from_elem((m, m), 1.0);
        let ss = TdScm {
            kind: ScmKind::Ss,
            averaging: Averaging::PerFrame,
            values: ones.into_shape_with_order((1, 1, m, m)).unwrap(),
        };
        let nn = TdScm {
            kind: ScmKind::Nn,
            averaging: Averaging::PerFrame,
            values: Array2::<f64>::eye(m)
                .into_shape_with_order((1, 1, m, m))
                .unwrap(),
        };
        let w = td_eq_mvdr(&nn, &ss, 0).unwrap();
        // h = 1/2 · 1; response wᵀh = h_ref = 1/2 gives w = 1/4 · 1.
        for i in 0..m {
            assert!((w.values[[0, 0, i]] - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_frame_reported() {
        let nan = TdScm {
            kind: ScmKind::Nn,
            averaging: Averaging::PerFrame,
            values: Array4::from_elem((2, 1, 2, 2), f64::NAN),
        };
        let err = td_eq_mcwf(&nan, &nan, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::Singular {
                axis: "frame",
                index: 0
            }
        ));
    }

    #[test]
    fn latent_ti_reproduces_noiseless_target() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (m, t, f) = (3, 60, 5);
        let y = Array3::from_shape_fn((m, t, f), |_| rng.gen_range(-1.0..1.0));
        let gains = [0.7, -0.2, 0.4];
        let target = Array2::from_shape_fn((t, f), |(ti, fi)| {
            (0..m).map(|i| gains[i] * y[[i, ti, fi]]).sum::<f64>()
        });
        let w = latent_eq_mcwf(y.view(), target.view(), LatentVariant::TimeInvariant).unwrap();
        let out = apply_latent(w.view(), y.view()).unwrap();
        let err = (&out - &target)
            .mapv(f64::abs)
            .fold(0.0, |a: f64, &b| a.max(b));
        assert!(err < 1e-4, "{err}");
    }
}
