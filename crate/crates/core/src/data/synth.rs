use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, ProfilePoint, Profile, ProfileSet, Result};

pub const SYNTHETIC_CASE: &str = "synthetic";

/// Map from low-fidelity to high-fidelity TKE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscrepancyLaw {
    Identity,
    /// `k_dns = coefficient · k_rans^exponent`
    Power { coefficient: f64, exponent: f64 },
}

impl Default for DiscrepancyLaw {
    fn default() -> Self {
        DiscrepancyLaw::Power {
            coefficient: 1.8,
            exponent: 0.9,
        }
    }
}

impl DiscrepancyLaw {
    pub fn apply(&self, k_rans: f64) -> f64 {
        match *self {
            DiscrepancyLaw::Identity => k_rans,
            DiscrepancyLaw::Power { coefficient, exponent } => coefficient * k_rans.powf(exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub profiles: usize,
    pub points: usize,
    pub law: DiscrepancyLaw,
    /// Gaussian noise standard deviation as a fraction of each profile's
    /// peak high-fidelity TKE.
    pub noise: f64,
    pub seed: u64,
    pub amplitude_range: (f64, f64),
    pub thickness_range: (f64, f64),
    /// Wall-normal extent sampled by every profile.
    pub height: f64,
    pub u_inf: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            profiles: 12,
            points: 64,
            law: DiscrepancyLaw::default(),
            noise: 0.01,
            seed: 0,
            amplitude_range: (0.5, 1.5),
            thickness_range: (0.1, 0.3),
            height: 1.0,
            u_inf: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(DataError::InvalidConfig(m.into()));
        if self.profiles < 3 {
            return fail("at least 3 profiles are required");
        }
        if self.points < 9 {
            return fail("at least 9 points per profile are required");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail("noise must be non-negative");
        }
        let (a0, a1) = self.amplitude_range;
        let (d0, d1) = self.thickness_range;
        if !(0.0 < a0 && a0 <= a1 && 0.0 < d0 && d0 <= d1 && self.height > 0.0 && self.u_inf > 0.0) {
            return fail("amplitude, thickness, height and freestream velocity must be positive ranges");
        }
        Ok(())
    }
}

/// Boundary-layer-like TKE shape `A (y/δ) exp(1 − y/δ)`, peaking at `y = δ`
/// with value `A`.
pub fn boundary_layer_k(y: f64, amplitude: f64, thickness: f64) -> f64 {
    let eta = y / thickness;
    amplitude * eta * (1.0 - eta).exp()
}

/// Paired profiles with randomized amplitude and thickness. Noisy
/// high-fidelity values are clipped at zero.
pub fn synthesize(config: &SynthConfig) -> Result<ProfileSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut profiles = Vec::with_capacity(config.profiles);
    for i in 0..config.profiles {
        let amplitude = rng.random_range(config.amplitude_range.0..=config.amplitude_range.1);
        let thickness = rng.random_range(config.thickness_range.0..=config.thickness_range.1);
        let station = i as f64;
        let ys: Vec<f64> = (0..config.points)
            .map(|j| config.height * (j + 1) as f64 / config.points as f64)
            .collect();
        let clean: Vec<(f64, f64)> = ys
            .iter()
            .map(|&y| {
                let k = boundary_layer_k(y, amplitude, thickness);
                (k, config.law.apply(k))
            })
            .collect();
        let peak = clean.iter().fold(0.0f64, |m, (_, d)| m.max(*d));
        let sigma = config.noise * peak;
        let points = ys
            .iter()
            .zip(clean)
            .map(|(&y, (k_rans, k_dns))| {
                let k_dns = if sigma > 0.0 {
                    (k_dns + sigma * standard.sample(&mut rng)).max(0.0)
                } else {
                    k_dns
                };
                ProfilePoint { x: station, y, k_rans, k_dns }
            })
            .collect();
        profiles.push(Profile {
            case_id: SYNTHETIC_CASE.into(),
            station,
            points,
        });
    }
    Ok(ProfileSet {
        profiles,
        u_inf: BTreeMap::from([(SYNTHETIC_CASE.to_string(), config.u_inf)]),
    })
}
