use ndarray::{Array3, Array4, ArrayView3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScmKind {
    Ss,
    Nn,
    Yy,
    Ys,
}

/// Frequency-domain spatial correlation matrices, T×F×M×M. After
/// [`FdScm::aggregate`] T is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FdScm {
    pub kind: ScmKind,
    pub values: Array4<Complex64>,
    pub aggregated: bool,
}

fn check_same(a: (usize, usize, usize), b: (usize, usize, usize), ctx: &'static str) -> Result<()> {
    if a != b {
        return Err(Error::shape(ctx, format!("{a:?}"), format!("{b:?}")));
    }
    Ok(())
}

/// Outer products `a(t,f) b(t,f)ᴴ` of M×T×F spectra; summed over frames if
/// `aggregate` is set.
pub fn fd_scm(
    a: ArrayView3<Complex64>,
    b: ArrayView3<Complex64>,
    kind: ScmKind,
    aggregate: bool,
) -> Result<FdScm> {
    check_same(a.dim(), b.dim(), "fd_scm operands")?;
    let (m, t, f) = a.dim();
    let frames = if aggregate { 1 } else { t };
    let mut values = Array4::zeros((frames, f, m, m));
    for ti in 0..t {
        let slot = if aggregate { 0 } else { ti };
        for fi in 0..f {
            for i in 0..m {
                let ai = a[[i, ti, fi]];
                for j in 0..m {
                    values[[slot, fi, i, j]] += ai * b[[j, ti, fi]].conj();
                }
            }
        }
    }
    Ok(FdScm {
        kind,
        values,
        aggregated: aggregate,
    })
}

impl FdScm {
    pub fn aggregate(&self) -> FdScm {
        let sum = self.values.sum_axis(Axis(0)).insert_axis(Axis(0));
        FdScm {
            kind: self.kind,
            values: sum,
            aggregated: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.values.dim().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    PerSample,
    PerFrame,
    Global,
}

/// Time-domain correlation matrices, T×S×M×M with S = N for per-sample
/// statistics and 1 otherwise; T = 1 for global averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct TdScm {
    pub kind: ScmKind,
    pub averaging: Averaging,
    pub values: Array4<f64>,
}

/// `a(t,n) b(t,n)ᵀ` from M×T×N frames, averaged according to `averaging`.
pub fn td_scm(
    a: ArrayView3<f64>,
    b: ArrayView3<f64>,
    kind: ScmKind,
    averaging: Averaging,
) -> Result<TdScm> {
    check_same(a.dim(), b.dim(), "td_scm operands")?;
    let (m, t, n) = a.dim();
    let shape = match averaging {
        Averaging::PerSample => (t, n, m, m),
        Averaging::PerFrame => (t, 1, m, m),
        Averaging::Global => (1, 1, m, m),
    };
    let mut values = Array4::zeros(shape);
    for ti in 0..t {
        for ni in 0..n {
            let (tt, ss) = match averaging {
                Averaging::PerSample => (ti, ni),
                Averaging::PerFrame => (ti, 0),
                Averaging::Global => (0, 0),
            };
            for i in 0..m {
                let ai = a[[i, ti, ni]];
                for j in 0..m {
                    values[[tt, ss, i, j]] += ai * b[[j, ti, ni]];
                }
            }
        }
    }
    let count = match averaging {
        Averaging::PerSample => 1.0,
        Averaging::PerFrame => n as f64,
        Averaging::Global => (n * t) as f64,
    };
    if count > 1.0 {
        values /= count;
    }
    Ok(TdScm {
        kind,
        averaging,
        values,
    })
}

impl TdScm {
    /// Frame-level matrices T×M×M; per-sample statistics are averaged over n.
    pub fn frame_matrices(&self) -> Array3<f64> {
        self.values
            .mean_axis(Axis(1))
            .expect("non-empty sample axis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};

    #[test]
    fn outer_product_example() {
        let j = Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let y = Array3::from_shape_vec((2, 1, 1), vec![one, j]).unwrap();
        let s = fd_scm(y.view(), y.view(), ScmKind::Yy, false).unwrap();
        let expect = array![[one, -j], [j, one]];
        assert_eq!(s.values.slice(ndarray::s![0, 0, .., ..]), expect);
        let z = Array3::zeros((2, 3, 4));
        let s = fd_scm(z.view(), z.view(), ScmKind::Nn, true).unwrap();
        assert!(s.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn aggregated_is_hermitian() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let y = Array3::from_shape_fn((4, 6, 5), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let s = fd_scm(y.view(), y.view(), ScmKind::Yy, true).unwrap();
        for f in 0..5 {
            for i in 0..4 {
                for k in 0..4 {
                    let d = s.values[[0, f, i, k]] - s.values[[0, f, k, i]].conj();
                    assert!(d.norm() < 1e-12);
                }
            }
        }
        let per = fd_scm(y.view(), y.view(), ScmKind::Yy, false).unwrap();
        let agg = per.aggregate();
        assert!(agg
            .values
            .iter()
            .zip(s.values.iter())
            .all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn td_sample_outer() {
        let a = Array3::from_shape_vec((2, 1, 1), vec![1.0, 2.0]).unwrap();
        let s = td_scm(a.view(), a.view(), ScmKind::Yy, Averaging::PerSample).unwrap();
        assert_eq!(
            s.values.slice(ndarray::s![0, 0, .., ..]),
            array![[1.0, 2.0], [2.0, 4.0]]
        );
    }

    #[test]
    fn white_noise_frame_average_is_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let (m, t, n) = (3, 400, 40);
        let powers = [1.0, 4.0, 0.25];
        let a = Array3::from_shape_fn((m, t, n), |(ch, _, _)| {
            let u: f64 = rng.gen_range(-1.0..1.0);
            u * (3.0 * powers[ch] as f64).sqrt()
        });
        let g = td_scm(a.view(), a.view(), ScmKind::Yy, Averaging::Global).unwrap();
        let count = (t * n) as f64;
        for i in 0..m {
            for k in 0..m {
                let v = g.values[[0, 0, i, k]];
                if i == k {
                    // variance of u² for uniform u with E[u²]=p is 0.8 p²
                    let sigma = (0.8 * powers[i] * powers[i] / count).sqrt();
                    assert!((v - powers[i]).abs() < 3.0 * sigma, "{i}: {v}");
                } else {
                    let sigma = (powers[i] * powers[k] / count).sqrt();
                    assert!(v.abs() < 3.0 * sigma, "{i},{k}: {v}");
                }
            }
        }
        let per = td_scm(a.view(), a.view(), ScmKind::Yy, Averaging::PerFrame).unwrap();
        let mean = per.frame_matrices().mean_axis(Axis(0)).unwrap();
        for (x, y) in mean.iter().zip(g.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
