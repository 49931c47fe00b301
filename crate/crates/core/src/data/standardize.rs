use serde::{Deserialize, Serialize};

use super::{DataError, Result};

pub const STD_FLOOR: f64 = 1e-12;

/// Mean and population standard deviation of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub mean: f64,
    pub std: f64,
}

impl StreamStats {
    pub fn fit(values: &[f64], stream: &'static str) -> Result<Self> {
        if values.is_empty() {
            return Err(DataError::DegenerateSpread { stream });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if !(std >= STD_FLOOR) {
            return Err(DataError::DegenerateSpread { stream });
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Input and target scaling, fitted on the training partition only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input: StreamStats,
    pub target: StreamStats,
}

impl Standardization {
    pub fn fit(inputs: &[f64], targets: &[f64]) -> Result<Self> {
        Ok(Self {
            input: StreamStats::fit(inputs, "input")?,
            target: StreamStats::fit(targets, "target")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_stream() {
        let s = StreamStats::fit(&[1.0, 3.0], "input").unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(s.apply(1.0), -1.0);
        assert_eq!(s.apply(3.0), 1.0);
    }

    #[test]
    fn constant_stream_is_degenerate() {
        assert!(matches!(
            StreamStats::fit(&[0.7; 10], "target"),
            Err(DataError::DegenerateSpread { stream: "target" })
        ));
    }

    #[test]
    fn standardized_stream_has_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..12.0)).collect();
        let s = StreamStats::fit(&values, "input").unwrap();
        let z: Vec<f64> = values.iter().map(|v| s.apply(*v)).collect();
        let m = z.iter().sum::<f64>() / 1000.0;
        let sd = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        for v in &values {
            assert!((s.invert(s.apply(*v)) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }
}
