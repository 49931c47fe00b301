use serde::{Deserialize, Serialize};

use super::{MlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mae,
    Mse,
}

impl LossKind {
    pub fn evaluate(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            LossKind::Mae => mae_loss(pred, target),
            LossKind::Mse => mse_loss(pred, target),
        }
    }

    /// Gradient of the mean loss with respect to each prediction. The MAE
    /// subgradient at zero residual is taken as zero.
    pub fn gradient(self, pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        check(pred, target)?;
        let n = pred.len() as f64;
        Ok(pred
            .iter()
            .zip(target)
            .map(|(p, t)| {
                let r = p - t;
                match self {
                    LossKind::Mae if r > 0.0 => 1.0 / n,
                    LossKind::Mae if r < 0.0 => -1.0 / n,
                    LossKind::Mae => 0.0,
                    LossKind::Mse => 2.0 * r / n,
                }
            })
            .collect())
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(format!("unknown loss '{other}', expected mae or mse")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        })
    }
}

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(MlError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(MlError::EmptyBatch);
    }
    Ok(())
}

pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!((mae_loss(&[1.0, 2.0, 4.0], &[1.0; 3]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((mse_loss(&[1.0, 2.0, 4.0], &[1.0; 3]).unwrap() - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(mae_loss(&[], &[]), Err(MlError::EmptyBatch)));
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(MlError::LengthMismatch { pred: 1, target: 2 })));
    }

    #[test]
    fn mae_subgradient_at_zero() {
        assert_eq!(LossKind::Mae.gradient(&[1.0, 2.0], &[1.0, 0.0]).unwrap(), vec![0.0, 0.5]);
        assert_eq!(LossKind::Mse.gradient(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn losses_are_non_negative_and_vanish_on_identity(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20)
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            for kind in [LossKind::Mae, LossKind::Mse] {
                prop_assert!(kind.evaluate(&p, &t).unwrap() >= 0.0);
                prop_assert_eq!(kind.evaluate(&p, &p).unwrap(), 0.0);
            }
        }
    }
}
