use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MASK_EPS: f64 = 1e-8;
pub const IPSM_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Ibm,
    Irm,
    Ipsm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealMask {
    pub kind: MaskKind,
    /// T×F.
    pub values: Array2<f64>,
}

/// Oracle masks from reference-channel target `s`, interference `n` and
/// mixture `y` spectra. IBM uses a strict `|S| > |N|`.
pub fn ideal_mask(
    kind: MaskKind,
    s: ArrayView2<Complex64>,
    n: ArrayView2<Complex64>,
    y: ArrayView2<Complex64>,
) -> IdealMask {
    let mut values = Array2::zeros(s.dim());
    match kind {
        MaskKind::Ibm => Zip::from(&mut values)
            .and(&s)
            .and(&n)
            .for_each(|m, s, n| *m = if s.norm() > n.norm() { 1.0 } else { 0.0 }),
        MaskKind::Irm => Zip::from(&mut values)
            .and(&s)
            .and(&n)
            .for_each(|m, s, n| *m = s.norm() / (s.norm() + n.norm() + MASK_EPS)),
        MaskKind::Ipsm => Zip::from(&mut values).and(&s).and(&y).for_each(|m, s, y| {
            let v = s.norm() * (s.arg() - y.arg()).cos() / (y.norm() + MASK_EPS);
            *m = v.clamp(0.0, IPSM_MAX);
        }),
    }
    IdealMask { kind, values }
}

impl IdealMask {
    pub fn apply(&self, y: ArrayView2<Complex64>) -> Array2<Complex64> {
        let mut out = y.to_owned();
        Zip::from(&mut out)
            .and(&self.values)
            .for_each(|o, &m| *o *= m);
        out
    }
}
