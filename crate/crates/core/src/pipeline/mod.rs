//! Couples the learned TKE correction to the eigenspace perturbation:
//! corrected stresses, ML-modulated envelopes and per-station metrics.

mod report;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_windows, split_profiles, DataError, Partition, Profile, ProfileSet, SplitAssignment, Standardization};
use crate::epm::{self, EigenvectorMode, Envelope, EpmError, LimitingState};
use crate::ml::{self, Architecture, Checkpoint, CnnModel, MlError, Mode, Samples, TrainingConfig, TrainingHistory};
use crate::tensor::{anisotropy, tke, SymTensor3, TensorError, K_FLOOR};

pub use report::{read_summary, write_report, Aggregate, StationSummary, Summary, REPORT_HEADER, SUMMARY_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corrected TKE must be non-negative and finite, got {0}")]
    InvalidKHat(f64),
    #[error("predictor returned {got} values for {expected} points")]
    PredictionLength { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Epm(#[from] EpmError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn check_k_hat(k_hat: f64) -> Result<()> {
    if k_hat >= 0.0 && k_hat.is_finite() {
        Ok(())
    } else {
        Err(PipelineError::InvalidKHat(k_hat))
    }
}

/// `R_corr = 2 k̂ (b + I/3)`: the low-fidelity anisotropy carried at the
/// corrected energy level. Equal to `(k̂/k) R`, which is how it is evaluated.
pub fn correct_reynolds_stress(r_rans: &SymTensor3, k_hat: f64) -> Result<SymTensor3> {
    check_k_hat(k_hat)?;
    anisotropy(r_rans)?;
    Ok(r_rans.scale(k_hat / tke(r_rans)))
}

/// Relative TKE discrepancy clipped to `[0, 1]`.
pub fn modulation_magnitude(k: f64, k_hat: f64) -> f64 {
    ((k_hat - k).abs() / k.max(K_FLOOR)).min(1.0)
}

/// Envelope over the baseline, the corrected stress and one member per
/// corner perturbed by the modulated magnitude at the corrected energy.
pub fn modulated_envelope(r_rans: &SymTensor3, k_hat: f64, corners: &[LimitingState]) -> Result<Envelope> {
    let r_corr = correct_reynolds_stress(r_rans, k_hat)?;
    let k = tke(r_rans);
    let delta = modulation_magnitude(k, k_hat);
    let mut members = vec![*r_rans, r_corr];
    for &target in corners {
        members.push(epm::perturb_to(r_rans, target, delta, k_hat, EigenvectorMode::Keep)?);
    }
    let mut env = Envelope::from_members(&members);
    // perturbations preserve the trace: members carry k or k̂ exactly
    (env.tke_lower, env.tke_upper) = k_band(k, k_hat);
    Ok(env)
}

/// Per-point coupling of the correction with the perturbation machinery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub k_rans: f64,
    pub k_hat: f64,
    pub r_rans: SymTensor3,
    pub r_corr: SymTensor3,
    pub envelope: Envelope,
}

pub fn correct_point(r_rans: &SymTensor3, k_hat: f64, corners: &[LimitingState]) -> Result<CorrectionResult> {
    Ok(CorrectionResult {
        k_rans: tke(r_rans),
        k_hat,
        r_rans: *r_rans,
        r_corr: correct_reynolds_stress(r_rans, k_hat)?,
        envelope: modulated_envelope(r_rans, k_hat, corners)?,
    })
}

/// Anything that maps a low-fidelity `k⁺` profile to corrected `k⁺` values.
pub trait TkePredictor {
    fn predict_profile(&self, k_plus_rans: &[f64]) -> Result<Vec<f64>>;
}

/// Trained network plus the scaling it was fitted with.
#[derive(Debug, Clone)]
pub struct TrainedCorrection {
    pub model: CnnModel,
    pub standardization: Standardization,
}

impl TrainedCorrection {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: checkpoint.model()?,
            standardization: checkpoint.standardization,
        })
    }

    fn width(&self) -> usize {
        self.model.architecture().input_length
    }
}

impl TkePredictor for TrainedCorrection {
    /// Windows, standardizes, runs inference, de-standardizes and clips at 0.
    fn predict_profile(&self, k_plus_rans: &[f64]) -> Result<Vec<f64>> {
        let width = self.width();
        let windows = make_windows(k_plus_rans, k_plus_rans, width)?;
        let s = self.standardization;
        let flat: Vec<f64> = windows.iter().flat_map(|w| w.values.iter().map(|v| s.input.apply(*v))).collect();
        let x = Array2::from_shape_vec((windows.len(), width), flat).expect("windows of equal width");
        let mut model = self.model.clone();
        model.set_mode(Mode::Inference);
        let z = model.predict(x.view())?;
        Ok(z.into_iter().map(|v| s.target.invert(v).max(0.0)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationPoint {
    pub y: f64,
    pub k_plus_rans: f64,
    pub k_plus_hat: f64,
    pub k_plus_dns: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationReport {
    pub id: String,
    pub mae_baseline: f64,
    pub mae_corrected: f64,
    /// `None` when the corrected error is exactly zero.
    pub improvement_factor: Option<f64>,
    pub coverage: f64,
    pub mean_band_width: f64,
    pub points: Vec<StationPoint>,
}

impl StationReport {
    pub fn from_points(id: String, points: Vec<StationPoint>) -> Self {
        let m = Metrics::of(&points);
        Self {
            id,
            mae_baseline: m.mae_baseline,
            mae_corrected: m.mae_corrected,
            improvement_factor: m.improvement_factor(),
            coverage: m.coverage,
            mean_band_width: m.mean_band_width,
            points,
        }
    }
}

/// Point-averaged metrics; shared by station and aggregate summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Metrics {
    pub mae_baseline: f64,
    pub mae_corrected: f64,
    pub coverage: f64,
    pub mean_band_width: f64,
}

impl Metrics {
    pub fn of(points: &[StationPoint]) -> Self {
        if points.is_empty() {
            return Self {
                mae_baseline: 0.0,
                mae_corrected: 0.0,
                coverage: 0.0,
                mean_band_width: 0.0,
            };
        }
        let n = points.len() as f64;
        let mean = |f: &dyn Fn(&StationPoint) -> f64| points.iter().map(f).sum::<f64>() / n;
        Self {
            mae_baseline: mean(&|p| (p.k_plus_rans - p.k_plus_dns).abs()),
            mae_corrected: mean(&|p| (p.k_plus_hat - p.k_plus_dns).abs()),
            coverage: mean(&|p| {
                if p.k_plus_dns >= p.band_lo && p.k_plus_dns <= p.band_hi {
                    1.0
                } else {
                    0.0
                }
            }),
            mean_band_width: mean(&|p| p.band_hi - p.band_lo),
        }
    }

    pub fn improvement_factor(&self) -> Option<f64> {
        (self.mae_corrected > 0.0).then(|| self.mae_baseline / self.mae_corrected)
    }
}

/// `k⁺` band of the modulated envelope at one point. Every member carries
/// either the baseline or the corrected energy, so the band is their range
/// whatever the anisotropy.
pub fn k_band(k_plus_rans: f64, k_plus_hat: f64) -> (f64, f64) {
    (k_plus_rans.min(k_plus_hat), k_plus_rans.max(k_plus_hat))
}

/// Compares corrected and baseline `k⁺` against the high-fidelity profile.
pub fn evaluate_station<P: TkePredictor + ?Sized>(
    profile: &Profile,
    u_inf: f64,
    predictor: &P,
) -> Result<StationReport> {
    let (rans, dns) = profile.k_plus(u_inf)?;
    let hat = predictor.predict_profile(&rans)?;
    if hat.len() != rans.len() {
        return Err(PipelineError::PredictionLength {
            expected: rans.len(),
            got: hat.len(),
        });
    }
    let mut points = Vec::with_capacity(rans.len());
    for (i, pt) in profile.points.iter().enumerate() {
        check_k_hat(hat[i])?;
        let (band_lo, band_hi) = k_band(rans[i], hat[i]);
        points.push(StationPoint {
            y: pt.y,
            k_plus_rans: rans[i],
            k_plus_hat: hat[i],
            k_plus_dns: dns[i],
            band_lo,
            band_hi,
        });
    }
    Ok(StationReport::from_points(profile.id(), points))
}

/// Output of [`train_correction`].
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub history: TrainingHistory,
    pub split: SplitAssignment,
}

fn partition_profiles<'a>(ps: &'a ProfileSet, split: &SplitAssignment, part: Partition) -> Vec<&'a Profile> {
    ps.profiles
        .iter()
        .filter(|p| split.partition_of(&p.id()) == Some(part))
        .collect()
}

/// Raw `k⁺` windows and targets of a set of profiles.
fn windowed(ps: &ProfileSet, profiles: &[&Profile], width: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for p in profiles {
        let (rans, dns) = p.k_plus(ps.u_inf_for(&p.case_id)?)?;
        for w in make_windows(&rans, &dns, width)? {
            rows.push(w.values);
            targets.push(w.target);
        }
    }
    Ok((rows, targets))
}

fn standardized(rows: &[Vec<f64>], targets: &[f64], s: &Standardization, width: usize) -> Samples {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| s.input.apply(*v)).collect()).collect();
    let targets = targets.iter().map(|t| s.target.apply(*t)).collect();
    Samples::from_rows(&rows, targets, width)
}

/// Splits by profile, windows, standardizes on the training partition,
/// trains the default network and packages a checkpoint.
pub fn train_correction(ps: &ProfileSet, config: &TrainingConfig) -> Result<TrainedRun> {
    config.validate()?;
    let split = split_profiles(ps, config.split_fractions, config.seed)?;
    let arch = Architecture::tke_correction();
    let width = arch.input_length;

    let train_profiles = partition_profiles(ps, &split, Partition::Train);
    if train_profiles.is_empty() {
        return Err(MlError::EmptyPartition("train").into());
    }
    let (train_rows, train_targets) = windowed(ps, &train_profiles, width)?;
    let (val_rows, val_targets) = windowed(ps, &partition_profiles(ps, &split, Partition::Val), width)?;

    let centers: Vec<f64> = train_rows.iter().map(|r| r[width / 2]).collect();
    let standardization = Standardization::fit(&centers, &train_targets)?;
    let train_set = standardized(&train_rows, &train_targets, &standardization, width);
    let val_set = standardized(&val_rows, &val_targets, &standardization, width);

    let model = CnnModel::new(arch, config.seed)?;
    let (model, history) = ml::train(model, &train_set, &val_set, config)?;
    let checkpoint = Checkpoint::new(&model, standardization, config.seed, config.split_fractions, config.loss);
    Ok(TrainedRun {
        checkpoint,
        history,
        split,
    })
}

/// Evaluates every test-partition station, re-deriving the split from the
/// seed and fractions stored in the checkpoint.
pub fn evaluate_held_out(ps: &ProfileSet, checkpoint: &Checkpoint) -> Result<Vec<StationReport>> {
    let split = split_profiles(ps, checkpoint.split_fractions, checkpoint.seed)?;
    let predictor = TrainedCorrection::from_checkpoint(checkpoint)?;
    partition_profiles(ps, &split, Partition::Test)
        .into_iter()
        .map(|p| evaluate_station(p, ps.u_inf_for(&p.case_id)?, &predictor))
        .collect()
}
