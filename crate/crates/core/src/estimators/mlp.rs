//! Fully connected tanh network with a linear output unit, trained on mean
//! squared error with Adam and early stopping on a held-out slice.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{diverged, Adam};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Input width, hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

/// Gradients, shaped like [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: 32,
            patience: 50,
            validation_fraction: 0.1,
        }
    }
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::arg(format!("invalid layer sizes {layer_sizes:?}")));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::arg("the output layer must have width 1"));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseLayer {
                    weights: DenseMatrix::new(fan_out, fan_in, data).expect("finite init"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            activation: Activation::Tanh,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            let (r, c) = (l.weights.rows(), l.weights.cols());
            for i in 0..r {
                for j in 0..c {
                    l.weights.set(i, j, flat[at + i * c + j]);
                }
            }
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    /// Activations of every layer for one input; the last holds the output.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut z: Vec<f64> = l
                .weights
                .row_iter()
                .zip(&l.bias)
                .map(|(w, b)| crate::numerics::dot(w, input) + b)
                .collect();
            if li != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z: Vec<f64> = l
                .weights
                .row_iter()
                .zip(&l.bias)
                .map(|(w, b)| crate::numerics::dot(w, &a) + b)
                .collect();
            if li != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            a = z;
        }
        a[0]
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }

    fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: DenseMatrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }
}

impl MlpGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Mean squared error of the network on a batch.
pub fn mlp_loss(p: &MlpParams, x: &DenseMatrix, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    x.row_iter()
        .zip(y)
        .map(|(r, t)| (p.predict_row(r) - t).powi(2))
        .sum::<f64>()
        / n
}

fn accumulate_sample(p: &MlpParams, x: &[f64], y: f64, scale: f64, g: &mut MlpGrads) -> f64 {
    let acts = p.forward_trace(x);
    let out = acts.last().unwrap()[0];
    let err = out - y;
    let mut delta = vec![2.0 * err * scale];
    for li in (0..p.layers.len()).rev() {
        let input = &acts[li];
        let gl = &mut g.layers[li];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gl.bias[o] += d;
            for (j, &a) in input.iter().enumerate() {
                let v = gl.weights.get(o, j) + d * a;
                gl.weights.set(o, j, v);
            }
        }
        if li == 0 {
            break;
        }
        let w = &p.layers[li].weights;
        // back through tanh: d/dz tanh(z) = 1 − a²
        delta = (0..w.cols())
            .map(|j| {
                let s: f64 = delta.iter().enumerate().map(|(o, d)| d * w.get(o, j)).sum();
                s * (1.0 - input[j] * input[j])
            })
            .collect();
    }
    err * err
}

/// Exact gradient of the batch mean squared error.
pub fn mlp_backprop_grad(p: &MlpParams, x: &DenseMatrix, y: &[f64]) -> Result<MlpGrads> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() != p.input_width() {
        return Err(Error::dims(format!(
            "inputs have {} columns, network expects {}",
            x.cols(),
            p.input_width()
        )));
    }
    let mut g = p.zero_grads();
    let scale = 1.0 / y.len() as f64;
    for (r, &t) in x.row_iter().zip(y) {
        accumulate_sample(p, r, t, scale, &mut g);
    }
    Ok(g)
}

fn check_config(cfg: &MlpConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::arg(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::arg("epochs and batch size must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::arg(format!(
            "validation fraction must lie in [0, 1), got {}",
            cfg.validation_fraction
        )));
    }
    Ok(())
}

/// Trains a network; returns the parameters with the best monitored loss.
///
/// `seed` fixes initialization, the validation carve-out and batch order.
pub fn fit_mlp(x: &DenseMatrix, y: &[f64], cfg: &MlpConfig, seed: u64) -> Result<MlpParams> {
    check_config(cfg)?;
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![x.cols()];
    sizes.extend_from_slice(&cfg.hidden_layers);
    sizes.push(1);
    let mut params = MlpParams::init(&sizes, &mut rng)?;

    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let n_val = if cfg.validation_fraction > 0.0 && n >= 10 {
        ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let x_train = x.select_rows(&train_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let x_val = x.select_rows(val_idx);
    let y_val: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
    let batch = cfg.batch_size.min(train_idx.len());

    let mut flat = params.to_flat();
    let mut opt = Adam::new(flat.len(), cfg.learning_rate);
    let mut best = (f64::INFINITY, flat.clone());
    let mut since_best = 0;
    let mut grads = params.zero_grads();
    let initial_loss = mlp_loss(&params, &x_train, &y_train);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(batch) {
            for l in &mut grads.layers {
                l.weights = DenseMatrix::zeros(l.weights.rows(), l.weights.cols());
                l.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                accumulate_sample(&params, x.row(i), y[i], scale, &mut grads);
            }
            opt.update(&mut flat, &grads.to_flat());
            params.set_flat(&flat);
        }
        let train_loss = mlp_loss(&params, &x_train, &y_train);
        let monitored = if n_val > 0 {
            mlp_loss(&params, &x_val, &y_val)
        } else {
            train_loss
        };
        if diverged(train_loss, initial_loss)
            || !monitored.is_finite()
            || flat.iter().any(|v| !v.is_finite())
        {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: train_loss,
            });
        }
        if monitored < best.0 {
            best = (monitored, flat.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    params.set_flat(&best.1);
    Ok(params)
}
