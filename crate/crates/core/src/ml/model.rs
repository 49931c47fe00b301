use ndarray::{Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchStats, BnCache, Mode, RunningStats};
use super::loss::LossKind;
use super::{MlError, Result};

/// Width of the input window fed to the default network.
pub const DEFAULT_WINDOW: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool {
        window: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => in_channels * out_channels * kernel + out_channels,
            Layer::BatchNorm { channels } => 2 * channels,
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            Layer::Relu | Layer::MaxPool { .. } | Layer::Flatten => 0,
        }
    }

    /// Output `(channels, length)` for the given input shape.
    fn output_shape(&self, (channels, len): (usize, usize)) -> Result<(usize, usize)> {
        let mismatch = |what: &str| Err(MlError::ShapeMismatch(format!("{what} cannot take input {channels}x{len}")));
        match *self {
            Layer::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => {
                if in_channels != channels {
                    return mismatch("conv1d");
                }
                if len < kernel {
                    return Err(MlError::InputTooShort { length: len, kernel });
                }
                Ok((out_channels, len - kernel + 1))
            }
            Layer::BatchNorm { channels: c } if c == channels => Ok((channels, len)),
            Layer::BatchNorm { .. } => mismatch("batch norm"),
            Layer::Relu => Ok((channels, len)),
            Layer::MaxPool { window } if window >= 1 && len / window >= 1 => Ok((channels, len / window)),
            Layer::MaxPool { .. } => mismatch("max pool"),
            Layer::Flatten => Ok((channels * len, 1)),
            Layer::Dense { inputs, outputs } if len == 1 && inputs == channels => Ok((outputs, 1)),
            Layer::Dense { .. } => mismatch("dense"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_length: usize,
    pub layers: Vec<Layer>,
}

impl Architecture {
    /// conv(1→2,k3) → BN → ReLU → conv(2→2,k3) → BN → ReLU → maxpool(2)
    /// → flatten(4) → dense(4→9) → ReLU → dense(9→1); 85 trainable values.
    pub fn tke_correction() -> Self {
        Self::with_conv_channels(2, 2)
    }

    pub fn with_conv_channels(first: usize, second: usize) -> Self {
        Self {
            input_channels: 1,
            input_length: DEFAULT_WINDOW,
            layers: vec![
                Layer::Conv1d {
                    in_channels: 1,
                    out_channels: first,
                    kernel: 3,
                },
                Layer::BatchNorm { channels: first },
                Layer::Relu,
                Layer::Conv1d {
                    in_channels: first,
                    out_channels: second,
                    kernel: 3,
                },
                Layer::BatchNorm { channels: second },
                Layer::Relu,
                Layer::MaxPool { window: 2 },
                Layer::Flatten,
                Layer::Dense {
                    inputs: second * 2,
                    outputs: 9,
                },
                Layer::Relu,
                Layer::Dense { inputs: 9, outputs: 1 },
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn output_shape(&self) -> Result<(usize, usize)> {
        self.layers
            .iter()
            .try_fold((self.input_channels, self.input_length), |shape, layer| layer.output_shape(shape))
    }

    /// Checks that every layer fits and that the network emits one scalar.
    pub fn validate(&self) -> Result<()> {
        match self.output_shape()? {
            (1, 1) => Ok(()),
            other => Err(MlError::ShapeMismatch(format!("network must produce a scalar, got {other:?}"))),
        }
    }

    fn batch_norm_channels(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm { channels } => Some(*channels),
                _ => None,
            })
            .collect()
    }
}

/// Convenience for [`Architecture::param_count`].
pub fn param_count(model: &CnnModel) -> usize {
    model.architecture().param_count()
}

/// Tiny 1D convolutional regressor with a flat parameter vector.
///
/// Parameters are laid out layer by layer in declaration order: convolution
/// weights `(out, in, kernel)` then biases, batch-norm scales then shifts,
/// dense weights `(outputs, inputs)` then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    architecture: Architecture,
    params: Vec<f64>,
    running: Vec<RunningStats>,
    mode: Mode,
}

enum Cache {
    Conv(Array3<f64>),
    BatchNorm(BnCache),
    Relu(Array3<f64>),
    Pool { indices: Array3<usize>, input_len: usize },
    Flatten((usize, usize, usize)),
    Dense(Array2<f64>),
    None,
}

/// Loss, gradient and batch statistics from one training batch.
#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub batch_stats: Vec<BatchStats>,
}

impl CnnModel {
    /// Initializes weights uniformly in ±sqrt(1/fan_in); batch-norm scales
    /// start at 1 and shifts at 0.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(architecture.param_count());
        for layer in &architecture.layers {
            match *layer {
                Layer::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let bound = (1.0 / (in_channels * kernel) as f64).sqrt();
                    let n = layer.param_count();
                    debug_assert_eq!(n, in_channels * out_channels * kernel + out_channels);
                    params.extend((0..n).map(|_| rng.random_range(-bound..=bound)));
                }
                Layer::Dense { inputs, .. } => {
                    let bound = (1.0 / inputs as f64).sqrt();
                    params.extend((0..layer.param_count()).map(|_| rng.random_range(-bound..=bound)));
                }
                Layer::BatchNorm { channels } => {
                    params.extend(std::iter::repeat_n(1.0, channels));
                    params.extend(std::iter::repeat_n(0.0, channels));
                }
                Layer::Relu | Layer::MaxPool { .. } | Layer::Flatten => {}
            }
        }
        let running = architecture.batch_norm_channels().into_iter().map(RunningStats::new).collect();
        Ok(Self {
            architecture,
            params,
            running,
            mode: Mode::Inference,
        })
    }

    pub fn from_parts(architecture: Architecture, params: Vec<f64>, running: Vec<RunningStats>) -> Result<Self> {
        architecture.validate()?;
        if params.len() != architecture.param_count() {
            return Err(MlError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                architecture.param_count(),
                params.len()
            )));
        }
        let channels = architecture.batch_norm_channels();
        let fits = channels.len() == running.len()
            && channels
                .iter()
                .zip(&running)
                .all(|(c, r)| r.mean.len() == *c && r.var.len() == *c);
        if !fits {
            return Err(MlError::ShapeMismatch("running statistics do not match batch-norm layers".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(MlError::NonFinite);
        }
        Ok(Self {
            architecture,
            params,
            running,
            mode: Mode::Inference,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn absorb_batch_stats(&mut self, stats: &[BatchStats]) {
        for (running, batch) in self.running.iter_mut().zip(stats) {
            running.absorb(batch);
        }
    }

    /// Scalar prediction for one window. Requires inference mode, since
    /// batch statistics of a single sample are undefined.
    pub fn forward(&self, window: &[f64]) -> Result<f64> {
        let x = Array2::from_shape_vec((1, window.len()), window.to_vec()).expect("row vector");
        Ok(self.predict(x.view())?[0])
    }

    /// Predictions for a `(batch, window)` matrix under the current mode.
    pub fn predict(&self, windows: ArrayView2<f64>) -> Result<Vec<f64>> {
        let x = self.lift(windows)?;
        let (y, _, _) = self.run(x, self.mode == Mode::Training)?;
        Ok(y.iter().copied().collect())
    }

    fn lift(&self, windows: ArrayView2<f64>) -> Result<Array3<f64>> {
        let (batch, len) = windows.dim();
        if self.architecture.input_channels != 1 || len != self.architecture.input_length {
            return Err(MlError::ShapeMismatch(format!(
                "expected windows of length {}, got {len}",
                self.architecture.input_length
            )));
        }
        Ok(windows.to_owned().into_shape_with_order((batch, 1, len)).expect("contiguous"))
    }

    fn run(&self, mut x: Array3<f64>, training: bool) -> Result<(Array3<f64>, Vec<Cache>, Vec<BatchStats>)> {
        let mut caches = Vec::with_capacity(self.architecture.layers.len());
        let mut stats = Vec::new();
        let mut offset = 0;
        let mut bn_index = 0;
        for layer in &self.architecture.layers {
            let n = layer.param_count();
            let p = &self.params[offset..offset + n];
            offset += n;
            match *layer {
                Layer::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let (w, b) = conv_views(p, in_channels, out_channels, kernel);
                    let y = layers::conv1d_forward(x.view(), w, b)?;
                    caches.push(if training { Cache::Conv(x) } else { Cache::None });
                    x = y;
                }
                Layer::BatchNorm { channels } => {
                    let (gamma, beta) = (ArrayView1::from(&p[..channels]), ArrayView1::from(&p[channels..]));
                    if training {
                        let (y, cache, batch) = layers::batchnorm_train(x.view(), gamma, beta)?;
                        caches.push(Cache::BatchNorm(cache));
                        stats.push(batch);
                        x = y;
                    } else {
                        x = layers::batchnorm_infer(x.view(), gamma, beta, &self.running[bn_index])?;
                        caches.push(Cache::None);
                    }
                    bn_index += 1;
                }
                Layer::Relu => {
                    let y = layers::relu(x.view());
                    caches.push(if training { Cache::Relu(x) } else { Cache::None });
                    x = y;
                }
                Layer::MaxPool { window } => {
                    let input_len = x.dim().2;
                    let (y, indices) = layers::maxpool1d_with_indices(x.view(), window);
                    caches.push(Cache::Pool { indices, input_len });
                    x = y;
                }
                Layer::Flatten => {
                    let dim = x.dim();
                    caches.push(Cache::Flatten(dim));
                    x = x
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((dim.0, dim.1 * dim.2, 1))
                        .expect("contiguous");
                }
                Layer::Dense { inputs, outputs } => {
                    let (w, b) = dense_views(p, inputs, outputs);
                    let batch = x.dim().0;
                    let flat = x.into_shape_with_order((batch, inputs)).expect("length-1 features");
                    let y = layers::dense_forward(flat.view(), w, b)?;
                    caches.push(if training { Cache::Dense(flat) } else { Cache::None });
                    x = y.insert_axis(Axis(2));
                }
            }
        }
        Ok((x, caches, stats))
    }

    /// Mean batch loss and its gradient with respect to every trainable
    /// parameter, using batch statistics in the normalization layers.
    /// Running statistics are not modified.
    pub fn backward(&self, windows: ArrayView2<f64>, targets: &[f64], loss: LossKind) -> Result<Backward> {
        if self.mode != Mode::Training {
            return Err(MlError::WrongMode);
        }
        let x = self.lift(windows)?;
        if targets.len() != x.dim().0 {
            return Err(MlError::LengthMismatch {
                pred: x.dim().0,
                target: targets.len(),
            });
        }
        let (y, caches, batch_stats) = self.run(x, true)?;
        let pred: Vec<f64> = y.iter().copied().collect();
        let value = loss.evaluate(&pred, targets)?;
        let dpred = loss.gradient(&pred, targets)?;

        let mut grad = vec![0.0; self.params.len()];
        let mut dy = Array3::from_shape_vec(y.dim(), dpred).expect("scalar outputs");
        let mut offset = self.params.len();
        for (layer, cache) in self.architecture.layers.iter().zip(caches).rev() {
            let n = layer.param_count();
            offset -= n;
            let p = &self.params[offset..offset + n];
            let g = &mut grad[offset..offset + n];
            dy = match (*layer, cache) {
                (
                    Layer::Conv1d {
                        in_channels,
                        out_channels,
                        kernel,
                    },
                    Cache::Conv(input),
                ) => {
                    let (w, _) = conv_views(p, in_channels, out_channels, kernel);
                    let (dx, dw, db) = layers::conv1d_backward(input.view(), w, dy.view());
                    let nw = dw.len();
                    g[..nw].iter_mut().zip(dw.iter()).for_each(|(a, b)| *a = *b);
                    g[nw..].iter_mut().zip(db.iter()).for_each(|(a, b)| *a = *b);
                    dx
                }
                (Layer::BatchNorm { channels }, Cache::BatchNorm(cache)) => {
                    let gamma = ArrayView1::from(&p[..channels]);
                    let (dx, dgamma, dbeta) = layers::batchnorm_backward(&cache, gamma, dy.view());
                    g[..channels].iter_mut().zip(dgamma.iter()).for_each(|(a, b)| *a = *b);
                    g[channels..].iter_mut().zip(dbeta.iter()).for_each(|(a, b)| *a = *b);
                    dx
                }
                (Layer::Relu, Cache::Relu(input)) => layers::relu_backward(input.view(), dy.view()),
                (Layer::MaxPool { .. }, Cache::Pool { indices, input_len }) => {
                    layers::maxpool1d_backward(&indices, input_len, dy.view())
                }
                (Layer::Flatten, Cache::Flatten(dim)) => dy.into_shape_with_order(dim).expect("flatten inverse"),
                (Layer::Dense { inputs, outputs }, Cache::Dense(input)) => {
                    let (w, _) = dense_views(p, inputs, outputs);
                    let batch = dy.dim().0;
                    let dy2 = dy.into_shape_with_order((batch, outputs)).expect("length-1 outputs");
                    let (dx, dw, db) = layers::dense_backward(input.view(), w, dy2.view());
                    let nw = dw.len();
                    g[..nw].iter_mut().zip(dw.iter()).for_each(|(a, b)| *a = *b);
                    g[nw..].iter_mut().zip(db.iter()).for_each(|(a, b)| *a = *b);
                    dx.insert_axis(Axis(2))
                }
                _ => unreachable!("training forward caches every layer"),
            };
        }
        Ok(Backward {
            loss: value,
            gradient: grad,
            batch_stats,
        })
    }
}

fn conv_views(p: &[f64], in_channels: usize, out_channels: usize, kernel: usize) -> (ArrayView3<'_, f64>, ArrayView1<'_, f64>) {
    let nw = in_channels * out_channels * kernel;
    (
        ArrayView3::from_shape((out_channels, in_channels, kernel), &p[..nw]).expect("conv weights"),
        ArrayView1::from(&p[nw..]),
    )
}

fn dense_views(p: &[f64], inputs: usize, outputs: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
    let nw = inputs * outputs;
    (
        ArrayView2::from_shape((outputs, inputs), &p[..nw]).expect("dense weights"),
        ArrayView1::from(&p[nw..]),
    )
}
