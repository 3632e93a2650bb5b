use std::f64::consts::PI;

/// Half-width of the interpolation kernel in taps (96 taps total).
pub const FRACTIONAL_DELAY_HALF_WIDTH: usize = 48;
/// Kaiser shape parameter of the interpolation kernel.
pub const KAISER_BETA: f64 = 13.0;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

/// Kaiser-windowed sinc evaluated at offset `u` (in samples); zero outside
/// the kernel support.
pub fn kaiser_sinc_tap(u: f64) -> f64 {
    let half = FRACTIONAL_DELAY_HALF_WIDTH as f64;
    if u.abs() >= half {
        return 0.0;
    }
    let r = u / half;
    let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA);
    sinc(u) * w
}

/// Delays `x` by `tau` samples (positive = later). Output has the input's
/// length; samples shifted in from outside the signal are zero. Integer delays
/// are exact shifts.
pub fn fractional_delay(x: &[f64], tau: f64) -> Vec<f64> {
    let len = x.len();
    let mut out = vec![0.0; len];
    let rounded = tau.round();
    if (tau - rounded).abs() < 1e-12 {
        let shift = rounded as i64;
        for (k, o) in out.iter_mut().enumerate() {
            let src = k as i64 - shift;
            if src >= 0 && (src as usize) < len {
                *o = x[src as usize];
            }
        }
        return out;
    }
    // out[k] = sum_j h(j - tau) x[k - j]; the taps only depend on j.
    let half = FRACTIONAL_DELAY_HALF_WIDTH as f64;
    let j_lo = (tau - half).ceil() as i64;
    let j_hi = (tau + half).floor() as i64;
    let taps: Vec<f64> = (j_lo..=j_hi)
        .map(|j| kaiser_sinc_tap(j as f64 - tau))
        .collect();
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, j) in taps.iter().zip(j_lo..=j_hi) {
            let src = k as i64 - j;
            if src >= 0 && (src as usize) < len {
                acc += t * x[src as usize];
            }
        }
        *o = acc;
    }
    out
}
