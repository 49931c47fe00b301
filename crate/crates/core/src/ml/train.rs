use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::layers::{Mode, RunningStats};
use super::loss::LossKind;
use super::model::CnnModel;
use super::{MlError, Result};
use crate::data::DEFAULT_SPLIT;

// keeps the shuffle stream apart from parameter initialization
const SHUFFLE_SALT: u64 = 0x005e_ed5a_170f_5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub split_fractions: [f64; 3],
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            patience: 10,
            split_fractions: DEFAULT_SPLIT,
            max_epochs: 1000,
            batch_size: 32,
            seed: 0,
            loss: LossKind::Mae,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(MlError::InvalidConfig(m));
        let f = self.split_fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail(format!("split fractions {f:?} must be in [0, 1] and sum to 1"));
        }
        if self.patience < 1 {
            return fail("patience must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return fail("batch size must be at least 2 for batch normalization".into());
        }
        if self.max_epochs < 1 {
            return fail("max_epochs must be at least 1".into());
        }
        Ok(())
    }
}

/// Windowed inputs `(n, width)` with one scalar target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub windows: Array2<f64>,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn new(windows: Array2<f64>, targets: Vec<f64>) -> Self {
        assert_eq!(windows.nrows(), targets.len(), "one target per window");
        Self { windows, targets }
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>, width: usize) -> Self {
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(Array2::from_shape_vec((rows.len(), width), flat).expect("rows of equal width"), targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            windows: self.windows.select(Axis(0), indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub loss: LossKind,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }
}

/// Source of the per-epoch validation loss used for early stopping.
pub trait ValidationMonitor {
    fn validation_loss(&mut self, epoch: usize, model: &CnnModel) -> Result<f64>;
}

impl<M: ValidationMonitor + ?Sized> ValidationMonitor for &mut M {
    fn validation_loss(&mut self, epoch: usize, model: &CnnModel) -> Result<f64> {
        (**self).validation_loss(epoch, model)
    }
}

/// Loss over held-out samples in inference mode.
pub struct HeldOut<'a> {
    pub samples: &'a Samples,
    pub loss: LossKind,
}

impl ValidationMonitor for HeldOut<'_> {
    fn validation_loss(&mut self, _epoch: usize, model: &CnnModel) -> Result<f64> {
        let pred = model.predict(self.samples.windows.view())?;
        self.loss.evaluate(&pred, &self.samples.targets)
    }
}

/// Trains with early stopping on `val`; falls back to the training samples
/// when the validation partition is empty.
pub fn train(model: CnnModel, train: &Samples, val: &Samples, config: &TrainingConfig) -> Result<(CnnModel, TrainingHistory)> {
    let monitored = if val.is_empty() { train } else { val };
    let monitor = HeldOut {
        samples: monitored,
        loss: config.loss,
    };
    train_with_monitor(model, train, config, monitor)
}

/// Epoch loop: seeded shuffle, mini-batch Adam updates, then one monitor
/// call per epoch. Stops `patience` epochs after the last improvement and
/// returns the parameters of the best epoch.
pub fn train_with_monitor<M: ValidationMonitor>(
    mut model: CnnModel,
    train: &Samples,
    config: &TrainingConfig,
    mut monitor: M,
) -> Result<(CnnModel, TrainingHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(MlError::EmptyPartition("train"));
    }
    if train.len() < 2 {
        return Err(MlError::DegenerateBatch { size: train.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut adam = AdamState::new(model.param_count());
    let mut history = TrainingHistory {
        loss: config.loss,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best: Option<(Vec<f64>, Vec<RunningStats>)> = None;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        model.set_mode(Mode::Training);
        let mut total = 0.0;
        for batch in batches(&order, config.batch_size) {
            let sub = train.subset(batch);
            let pass = model.backward(sub.windows.view(), &sub.targets, config.loss)?;
            adam_step(model.params_mut(), &pass.gradient, &mut adam, config.learning_rate);
            model.absorb_batch_stats(&pass.batch_stats);
            total += pass.loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        model.set_mode(Mode::Inference);
        let val_loss = monitor.validation_loss(epoch, &model)?;
        if !train_loss.is_finite() || !val_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(MlError::Diverged { epoch });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = Some((model.params().to_vec(), model.running_stats().to_vec()));
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }

    if let Some((params, running)) = best {
        model = CnnModel::from_parts(model.architecture().clone(), params, running)?;
    }
    model.set_mode(Mode::Inference);
    Ok((model, history))
}

/// Fixed-size chunks; a trailing single sample joins the previous batch so
/// every batch has at least two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}
