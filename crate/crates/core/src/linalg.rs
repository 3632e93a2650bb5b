//! Small dense linear algebra over `f64` and `Complex64` for M×M systems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn abs(self) -> f64;
    fn re(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn re(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Adds `eps · tr(A)/M · I`. A zero matrix gets loading `eps` so it stays
/// invertible.
pub fn diagonal_load<T: Scalar>(a: &Array2<T>, eps: f64) -> Array2<T> {
    let m = a.nrows();
    let trace: f64 = (0..m).map(|i| a[[i, i]].re()).sum();
    let mut load = eps * trace / m as f64;
    if !(load > 0.0) {
        load = eps;
    }
    let mut out = a.clone();
    for i in 0..m {
        out[[i, i]] = out[[i, i]] + T::from_real(load);
    }
    out
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot is numerically zero relative to the matrix scale.
pub fn solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let k = b.ncols();
    let mut a = a.to_owned();
    let mut x = b.to_owned();
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[[r, col]].abs()))
            .fold((col, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best <= scale * 1e-14 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap([piv, c], [col, c]);
            }
            for c in 0..k {
                x.swap([piv, c], [col, c]);
            }
        }
        let p = a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / p;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                a[[r, c]] = a[[r, c]] - f * a[[col, c]];
            }
            for c in 0..k {
                x[[r, c]] = x[[r, c]] - f * x[[col, c]];
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[[col, col]];
        for c in 0..k {
            let mut acc = x[[col, c]];
            for j in col + 1..n {
                acc = acc - a[[col, j]] * x[[j, c]];
            }
            x[[col, c]] = acc / p;
        }
    }
    Some(x)
}

pub fn solve_vec<T: Scalar>(a: ArrayView2<T>, b: ArrayView1<T>) -> Option<Array1<T>> {
    let n = b.len();
    let b2 = b.to_owned().into_shape_with_order((n, 1)).ok()?;
    solve(a, b2.view()).map(|x| x.column(0).to_owned())
}

pub fn matvec<T: Scalar>(a: ArrayView2<T>, x: ArrayView1<T>) -> Array1<T> {
    Array1::from_iter((0..a.nrows()).map(|i| {
        let mut acc = T::zero();
        for j in 0..a.ncols() {
            acc = acc + a[[i, j]] * x[j];
        }
        acc
    }))
}

/// `Σ conj(a_i) b_i`.
pub fn inner<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + x.conj() * y)
}

pub fn norm<T: Scalar>(a: ArrayView1<T>) -> f64 {
    a.iter().map(|v| v.abs() * v.abs()).sum::<f64>().sqrt()
}

pub const JACOBI_SWEEPS: usize = 30;

/// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
/// Returns the eigenvalues and the unitary matrix whose columns are the
/// matching eigenvectors, unsorted.
pub fn hermitian_eigen<T: Scalar>(a: ArrayView2<T>) -> (Vec<f64>, Array2<T>) {
    let m = a.nrows();
    let mut a = a.to_owned();
    let mut v = Array2::from_shape_fn((m, m), |(i, j)| if i == j { T::one() } else { T::zero() });
    let scale = a.iter().map(|x| x.abs() * x.abs()).sum::<f64>().sqrt();
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]].abs() * a[[i, j]].abs())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let g = a[[p, q]];
                let r = g.abs();
                if r == 0.0 {
                    continue;
                }
                // The phase e makes the (p, q) entry real, then a real
                // rotation by theta annihilates it.
                let e = g / T::from_real(r);
                let theta = 0.5 * (2.0 * r).atan2(a[[q, q]].re() - a[[p, p]].re());
                let (c, s) = (T::from_real(theta.cos()), T::from_real(theta.sin()));
                let (up_q, uq_q) = (s, c * e.conj());
                let (up_p, uq_p) = (c, -(s * e.conj()));
                for k in 0..m {
                    let (x, y) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = x * up_p + y * uq_p;
                    a[[k, q]] = x * up_q + y * uq_q;
                    let (x, y) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = x * up_p + y * uq_p;
                    v[[k, q]] = x * up_q + y * uq_q;
                }
                for k in 0..m {
                    let (x, y) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = up_p.conj() * x + uq_p.conj() * y;
                    a[[q, k]] = up_q.conj() * x + uq_q.conj() * y;
                }
            }
        }
    }
    ((0..m).map(|i| a[[i, i]].re()).collect(), v)
}

/// Principal eigenvector of a Hermitian PSD matrix, unit norm, with the
/// reference component real and nonnegative. Returns `(vector, eigenvalue)`;
/// a zero matrix yields the reference one-hot.
pub fn principal_eigenvector<T: Scalar>(a: ArrayView2<T>, reference: usize) -> (Array1<T>, f64) {
    let m = a.nrows();
    if a.iter().all(|x| x.abs() == 0.0) {
        let mut e = Array1::from_elem(m, T::zero());
        e[reference] = T::one();
        return (e, 0.0);
    }
    let (values, vectors) = hermitian_eigen(a);
    let top = (0..m).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    let mut v = vectors.column(top).to_owned();
    let r = v[reference];
    if r.abs() > 0.0 {
        let phase = r.conj() / T::from_real(r.abs());
        v.mapv_inplace(|x| x * phase);
    }
    (v, values[top])
}
