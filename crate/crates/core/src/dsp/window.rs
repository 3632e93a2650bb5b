use std::f64::consts::PI;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Square root of the periodic Hann window, `sin(πn/N)`.
pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| (PI * i as f64 / n as f64).sin()).collect()
}

pub fn rectangular(n: usize) -> Vec<f64> {
    vec![1.0; n]
}
