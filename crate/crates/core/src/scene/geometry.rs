use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of sound in m/s.
pub const SOUND_SPEED: f64 = 343.0;

/// A linear microphone array.
///
/// Azimuth convention: 0° is endfire on the side of the first element, so a
/// wave from 0° reaches element 0 first. A channel at coordinate `x_m` lags
/// the reference by `(x_m - x_ref) cos θ / c` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Element coordinates along the array axis, metres.
    pub positions: Vec<f64>,
    /// Ordered microphone pairs `(p1, p2)`, zero-based.
    pub pairs: Vec<(usize, usize)>,
    pub reference: usize,
    pub sound_speed: f64,
}

impl ArrayGeometry {
    pub fn new(
        positions: Vec<f64>,
        pairs: Vec<(usize, usize)>,
        reference: usize,
        sound_speed: f64,
    ) -> Result<Self> {
        let g = Self {
            positions,
            pairs,
            reference,
            sound_speed,
        };
        g.validate()?;
        Ok(g)
    }

    /// Eight elements spaced 15-10-5-20-5-10-15 cm with the six pairs
    /// (1,8) (2,7) (3,6) (4,5) (5,8) (4,8), reference on element 1.
    pub fn default_linear8() -> Self {
        let spacings = [0.15, 0.10, 0.05, 0.20, 0.05, 0.10, 0.15];
        let mut positions = vec![0.0];
        for s in spacings {
            positions.push(positions.last().unwrap() + s);
        }
        Self {
            positions,
            pairs: vec![(0, 7), (1, 6), (2, 5), (3, 4), (4, 7), (3, 7)],
            reference: 0,
            sound_speed: SOUND_SPEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.positions.len();
        if m == 0 {
            return Err(Error::Config("array has no elements".into()));
        }
        if self.reference >= m {
            return Err(Error::Config(format!(
                "reference channel {} out of range for {m} elements",
                self.reference
            )));
        }
        if !(self.sound_speed > 0.0) {
            return Err(Error::Config("sound speed must be positive".into()));
        }
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            if a >= m || b >= m {
                return Err(Error::Config(format!("pair {i} ({a},{b}) out of range")));
            }
            if (self.positions[a] - self.positions[b]).abs() <= 0.0 {
                return Err(Error::Config(format!(
                    "pair {i} ({a},{b}) has zero spacing"
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.positions.len()
    }

    pub fn pair_distance(&self, p: usize) -> f64 {
        let (a, b) = self.pairs[p];
        (self.positions[a] - self.positions[b]).abs()
    }

    /// Delay of `pair.1` relative to `pair.0` in samples for a wave from
    /// `theta_deg`: `d cos θ f_s / c` (negated if the pair is listed
    /// right-to-left along the axis).
    pub fn steering_delay(&self, p: usize, theta_deg: f64, sample_rate: u32) -> f64 {
        let (a, b) = self.pairs[p];
        (self.positions[b] - self.positions[a]) * theta_deg.to_radians().cos() * sample_rate as f64
            / self.sound_speed
    }

    /// Delay of channel `m` relative to the reference channel, in seconds.
    pub fn channel_delay_seconds(&self, m: usize, theta_deg: f64) -> f64 {
        (self.positions[m] - self.positions[self.reference]) * theta_deg.to_radians().cos()
            / self.sound_speed
    }

    /// Delay of channel `m` relative to the reference channel, in samples.
    pub fn channel_delay(&self, m: usize, theta_deg: f64, sample_rate: u32) -> f64 {
        self.channel_delay_seconds(m, theta_deg) * sample_rate as f64
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::default_linear8()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_array_spans_80cm() {
        let g = ArrayGeometry::default_linear8();
        assert_eq!(g.channels(), 8);
        assert!((g.pair_distance(0) - 0.80).abs() < 1e-12);
        g.validate().unwrap();
    }

    #[test]
    fn broadside_has_no_delay() {
        let g = ArrayGeometry::default_linear8();
        for p in 0..g.pairs.len() {
            assert!(g.steering_delay(p, 90.0, 16_000).abs() < 1e-12);
        }
    }

    #[test]
    fn endfire_delays() {
        let g = ArrayGeometry::new(vec![0.0, 0.15], vec![(0, 1)], 0, 343.0).unwrap();
        let tau = g.steering_delay(0, 0.0, 16_000);
        assert!((tau - 0.15 * 16_000.0 / 343.0).abs() < 1e-12);
        assert!((tau - 6.9971).abs() < 1e-4);
        assert!((g.steering_delay(0, 180.0, 16_000) + 6.9971).abs() < 1e-4);
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(ArrayGeometry::new(vec![0.0, 0.1], vec![(0, 1)], 2, 343.0).is_err());
        assert!(ArrayGeometry::new(vec![0.0, 0.0], vec![(0, 1)], 0, 343.0).is_err());
        assert!(ArrayGeometry::new(vec![0.0, 0.1], vec![(0, 3)], 0, 343.0).is_err());
    }
}
