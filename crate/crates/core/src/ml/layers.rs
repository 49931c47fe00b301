//! Batched layer kernels. Activations are `(batch, channels, length)`.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::{MlError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Inference,
}

/// Valid cross-correlation. `w` is `(out, in, kernel)`.
pub fn conv1d_forward(x: ArrayView3<f64>, w: ArrayView3<f64>, b: ArrayView1<f64>) -> Result<Array3<f64>> {
    let (batch, in_ch, len) = x.dim();
    let (out_ch, w_in, kernel) = w.dim();
    if w_in != in_ch || b.len() != out_ch {
        return Err(MlError::ShapeMismatch(format!(
            "conv1d weights {:?} / bias {} do not fit {in_ch} input channels",
            w.dim(),
            b.len()
        )));
    }
    if len < kernel {
        return Err(MlError::InputTooShort { length: len, kernel });
    }
    let out_len = len - kernel + 1;
    let mut y = Array3::zeros((batch, out_ch, out_len));
    for n in 0..batch {
        for o in 0..out_ch {
            for t in 0..out_len {
                let mut acc = b[o];
                for i in 0..in_ch {
                    for j in 0..kernel {
                        acc += w[[o, i, j]] * x[[n, i, t + j]];
                    }
                }
                y[[n, o, t]] = acc;
            }
        }
    }
    Ok(y)
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_backward(
    x: ArrayView3<f64>,
    w: ArrayView3<f64>,
    dy: ArrayView3<f64>,
) -> (Array3<f64>, Array3<f64>, Array1<f64>) {
    let (batch, in_ch, _) = x.dim();
    let (out_ch, _, kernel) = w.dim();
    let out_len = dy.dim().2;
    let mut dx = Array3::zeros(x.dim());
    let mut dw = Array3::zeros(w.dim());
    let mut db = Array1::zeros(out_ch);
    for n in 0..batch {
        for o in 0..out_ch {
            for t in 0..out_len {
                let g = dy[[n, o, t]];
                db[o] += g;
                for i in 0..in_ch {
                    for j in 0..kernel {
                        dw[[o, i, j]] += g * x[[n, i, t + j]];
                        dx[[n, i, t + j]] += g * w[[o, i, j]];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Non-trainable per-channel statistics used at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn absorb(&mut self, batch: &BatchStats) {
        for c in 0..self.mean.len() {
            self.mean[c] = (1.0 - BN_MOMENTUM) * self.mean[c] + BN_MOMENTUM * batch.mean[c];
            self.var[c] = (1.0 - BN_MOMENTUM) * self.var[c] + BN_MOMENTUM * batch.var[c];
        }
    }
}

/// Per-channel mean and (biased) variance over batch × length.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Array3<f64>,
    pub inv_std: Array1<f64>,
}

fn check_bn_shapes(x: &ArrayView3<f64>, gamma: &ArrayView1<f64>, beta: &ArrayView1<f64>) -> Result<()> {
    let channels = x.dim().1;
    if gamma.len() != channels || beta.len() != channels {
        return Err(MlError::ShapeMismatch(format!(
            "batch norm over {channels} channels got {} scales and {} shifts",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

pub fn batchnorm_train(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> Result<(Array3<f64>, BnCache, BatchStats)> {
    check_bn_shapes(&x, &gamma, &beta)?;
    let (batch, channels, len) = x.dim();
    if batch < 2 {
        return Err(MlError::DegenerateBatch { size: batch });
    }
    let count = (batch * len) as f64;
    let mut mean = Array1::zeros(channels);
    let mut var = Array1::zeros(channels);
    for c in 0..channels {
        let lane = x.slice(s![.., c, ..]);
        let m = lane.iter().sum::<f64>() / count;
        mean[c] = m;
        var[c] = lane.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
    }
    let inv_std = var.mapv(|v: f64| 1.0 / (v + BN_EPS).sqrt());
    let mut xhat = Array3::zeros(x.dim());
    let mut y = Array3::zeros(x.dim());
    for ((n, c, t), v) in x.indexed_iter() {
        let h = (v - mean[c]) * inv_std[c];
        xhat[[n, c, t]] = h;
        y[[n, c, t]] = gamma[c] * h + beta[c];
    }
    Ok((y, BnCache { xhat, inv_std }, BatchStats { mean, var }))
}

pub fn batchnorm_infer(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running: &RunningStats,
) -> Result<Array3<f64>> {
    check_bn_shapes(&x, &gamma, &beta)?;
    if running.mean.len() != x.dim().1 {
        return Err(MlError::ShapeMismatch("running statistics do not match channels".into()));
    }
    let mut y = Array3::zeros(x.dim());
    for ((n, c, t), v) in x.indexed_iter() {
        let h = (v - running.mean[c]) / (running.var[c] + BN_EPS).sqrt();
        y[[n, c, t]] = gamma[c] * h + beta[c];
    }
    Ok(y)
}

/// Batch normalization that also maintains `running` in training mode.
pub fn batchnorm_forward(
    x: ArrayView3<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running: &mut RunningStats,
    mode: Mode,
) -> Result<Array3<f64>> {
    match mode {
        Mode::Training => {
            let (y, _, stats) = batchnorm_train(x, gamma, beta)?;
            running.absorb(&stats);
            Ok(y)
        }
        Mode::Inference => batchnorm_infer(x, gamma, beta, running),
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    cache: &BnCache,
    gamma: ArrayView1<f64>,
    dy: ArrayView3<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (batch, channels, len) = dy.dim();
    let count = (batch * len) as f64;
    let mut dgamma = Array1::zeros(channels);
    let mut dbeta = Array1::zeros(channels);
    let mut dx = Array3::zeros(dy.dim());
    for c in 0..channels {
        let g = dy.slice(s![.., c, ..]);
        let h = cache.xhat.slice(s![.., c, ..]);
        let sum_g: f64 = g.iter().sum();
        let sum_gh: f64 = g.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
        dbeta[c] = sum_g;
        dgamma[c] = sum_gh;
        // dxhat = dy * gamma; dx = inv_std/N (N dxhat - sum dxhat - xhat sum(dxhat xhat))
        let scale = gamma[c] * cache.inv_std[c] / count;
        for n in 0..batch {
            for t in 0..len {
                dx[[n, c, t]] = scale * (count * g[[n, t]] - sum_g - h[[n, t]] * sum_gh);
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu(x: ArrayView3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(x: ArrayView3<f64>, dy: ArrayView3<f64>) -> Array3<f64> {
    let mut dx = dy.to_owned();
    dx.zip_mut_with(&x, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
    dx
}

/// Non-overlapping max pooling; a trailing partial window is dropped.
/// Returns the pooled values and the source index of each maximum.
pub fn maxpool1d_with_indices(x: ArrayView3<f64>, window: usize) -> (Array3<f64>, Array3<usize>) {
    let (batch, channels, len) = x.dim();
    let out_len = len / window;
    let mut y = Array3::zeros((batch, channels, out_len));
    let mut idx = Array3::zeros((batch, channels, out_len));
    for n in 0..batch {
        for c in 0..channels {
            for t in 0..out_len {
                let start = t * window;
                let mut best = start;
                for j in start + 1..start + window {
                    if x[[n, c, j]] > x[[n, c, best]] {
                        best = j;
                    }
                }
                y[[n, c, t]] = x[[n, c, best]];
                idx[[n, c, t]] = best;
            }
        }
    }
    (y, idx)
}

pub fn maxpool1d(x: ArrayView3<f64>, window: usize) -> Array3<f64> {
    maxpool1d_with_indices(x, window).0
}

pub fn maxpool1d_backward(indices: &Array3<usize>, input_len: usize, dy: ArrayView3<f64>) -> Array3<f64> {
    let (batch, channels, _) = dy.dim();
    let mut dx = Array3::zeros((batch, channels, input_len));
    for ((n, c, t), g) in dy.indexed_iter() {
        dx[[n, c, indices[[n, c, t]]]] += g;
    }
    dx
}

/// `x · Wᵀ + b` with `x` as `(batch, inputs)` and `W` as `(outputs, inputs)`.
pub fn dense_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array2<f64>> {
    if x.dim().1 != w.dim().1 || b.len() != w.dim().0 {
        return Err(MlError::ShapeMismatch(format!(
            "dense layer {:?} cannot take {} inputs",
            w.dim(),
            x.dim().1
        )));
    }
    Ok(x.dot(&w.t()) + b.insert_axis(Axis(0)))
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    (dy.dot(&w), dy.t().dot(&x), dy.sum_axis(Axis(0)))
}
