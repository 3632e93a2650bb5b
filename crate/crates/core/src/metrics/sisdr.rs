use crate::error::{Error, Result};

/// Magnitude bound on reported SI-SDR values, dB.
pub const SI_SDR_CAP_DB: f64 = 80.0;

/// Scale-invariant SDR of `estimate` against `reference` (equal lengths).
///
/// The reference is projected out of the estimate, `s_t = <ŝ,s> s / |s|^2`,
/// and the result is `10 log10(|s_t|^2 / |ŝ - s_t|^2)`, clamped to ±80 dB.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape("si_sdr", reference.len(), estimate.len()));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = dot / ref_energy;
    let mut target_energy = 0.0;
    let mut noise_energy = 0.0;
    for (e, s) in estimate.iter().zip(reference) {
        let t = alpha * s;
        target_energy += t * t;
        noise_energy += (e - t) * (e - t);
    }
    if noise_energy == 0.0 {
        return Ok(if target_energy > 0.0 { SI_SDR_CAP_DB } else { -SI_SDR_CAP_DB });
    }
    if target_energy == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Vec<f64> {
        (0..256).map(|k| ((k as f64) * 0.37).sin() + 0.2).collect()
    }

    #[test]
    fn perfect_estimate_hits_cap() {
        let s = reference();
        assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn scale_invariant() {
        let s = reference();
        let e: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(k, v)| v + 0.1 * ((k * 7 % 13) as f64 - 6.0))
            .collect();
        let e2: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&e, &s).unwrap(), si_sdr(&e2, &s).unwrap());
    }

    #[test]
    fn orthogonal_noise_ten_db() {
        let s = reference();
        let raw: Vec<f64> = (0..256).map(|k| ((k as f64) * 1.91).cos()).collect();
        let es: f64 = s.iter().map(|v| v * v).sum();
        let proj = raw.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / es;
        let mut noise: Vec<f64> = raw.iter().zip(&s).map(|(a, b)| a - proj * b).collect();
        let en: f64 = noise.iter().map(|v| v * v).sum();
        let g = (es / (10.0 * en)).sqrt();
        noise.iter_mut().for_each(|v| *v *= g);
        let est: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| a + b).collect();
        assert!((si_sdr(&est, &s).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_error_is_clamped() {
        let s = reference();
        let e: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(k, v)| v + 1e-6 * ((k % 3) as f64 - 1.0))
            .collect();
        assert_eq!(si_sdr(&e, &s).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn zero_reference_is_error() {
        assert!(matches!(
            si_sdr(&[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn zero_estimate_floors() {
        assert_eq!(
            si_sdr(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap(),
            -SI_SDR_CAP_DB
        );
    }
}
