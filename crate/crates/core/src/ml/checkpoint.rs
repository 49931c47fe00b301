use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::RunningStats;
use super::loss::LossKind;
use super::model::{Architecture, CnnModel};
use super::{MlError, Result};
use crate::data::Standardization;

pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to reproduce inference and the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub param_count: usize,
    pub params: Vec<f64>,
    pub running_stats: Vec<RunningStats>,
    pub standardization: Standardization,
    pub seed: u64,
    pub split_fractions: [f64; 3],
    pub loss: LossKind,
}

impl Checkpoint {
    pub fn new(model: &CnnModel, standardization: Standardization, seed: u64, split_fractions: [f64; 3], loss: LossKind) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            architecture: model.architecture().clone(),
            param_count: model.param_count(),
            params: model.params().to_vec(),
            running_stats: model.running_stats().to_vec(),
            standardization,
            seed,
            split_fractions,
            loss,
        }
    }

    pub fn model(&self) -> Result<CnnModel> {
        CnnModel::from_parts(self.architecture.clone(), self.params.clone(), self.running_stats.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("format_version").and_then(|v| v.as_u64());
        if found != Some(FORMAT_VERSION as u64) {
            return Err(MlError::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let checkpoint: Checkpoint = serde_json::from_value(value)?;
        if checkpoint.param_count != checkpoint.params.len() {
            return Err(MlError::ShapeMismatch(format!(
                "checkpoint declares {} parameters but stores {}",
                checkpoint.param_count,
                checkpoint.params.len()
            )));
        }
        Ok(checkpoint)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StreamStats;
    use crate::ml::model::Architecture;

    fn sample() -> Checkpoint {
        let model = CnnModel::new(Architecture::tke_correction(), 77).unwrap();
        let stats = Standardization {
            input: StreamStats { mean: 0.1234567890123, std: 0.3 },
            target: StreamStats { mean: 1.0 / 3.0, std: 0.7 },
        };
        Checkpoint::new(&model, stats, 77, [0.75, 0.05, 0.2], LossKind::Mae)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let (a, b) = (ck.model().unwrap(), back.model().unwrap());
        let w = [0.3, 0.1, -0.5, 1.0, 2.0, 0.0, -1.0, 0.25, 0.125];
        assert_eq!(a.forward(&w).unwrap().to_bits(), b.forward(&w).unwrap().to_bits());
        assert_eq!(back.param_count, 85);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let text = sample().to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            Checkpoint::from_json(&text),
            Err(MlError::VersionMismatch { found: Some(2), expected: 1 })
        ));
    }
}
