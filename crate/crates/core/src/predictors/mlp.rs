//! Fully connected regression network.
//!
//! Hidden layers use rectified-linear units, the output is linear. Training
//! minimizes `0.5 * mean((out - t)^2)` on standardized targets with Adam
//! (beta1 0.9, beta2 0.999, eps 1e-8) over shuffled mini-batches. Training
//! stops at `max_epochs` or once the epoch loss has failed to improve by
//! more than `tol` for `n_iter_no_change` consecutive epochs.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{FeatureVector, ModelSpec, PredictError, Scaler, N_FEATURES};
use crate::seed;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Layer widths for `h_num` hidden layers starting at `h_size`: each extra
/// layer halves the previous width (256 then 128 for two layers).
pub fn hidden_sizes(h_size: usize, h_num: usize) -> Vec<usize> {
    (0..h_num).map(|i| (h_size >> i).max(1)).collect()
}

/// Weights and biases for every layer; `weights[l]` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct Grads {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MlpNetwork {
    fn sizes(hidden: &[usize]) -> Vec<usize> {
        let mut s = vec![N_FEATURES];
        s.extend_from_slice(hidden);
        s.push(1);
        s
    }

    /// Glorot-uniform weights and biases, `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn init(hidden: &[usize], seed_value: u64) -> Self {
        let mut rng = seed::rng_from_seed(seed::derive_seed(seed_value, &[b"mlp-init"]));
        let sizes = Self::sizes(hidden);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let mut draw = || (2.0 * seed::unit_f64(&mut rng) - 1.0) * limit;
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), &mut draw));
            biases.push(Array1::from_shape_simple_fn(w[1], &mut draw));
        }
        Self { weights, biases }
    }

    pub fn zeros(hidden: &[usize]) -> Self {
        let sizes = Self::sizes(hidden);
        Self {
            weights: sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Pre-activations of every layer for a batch (`batch x N_FEATURES`).
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut act = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = act.dot(w) + b;
            if l + 1 < self.weights.len() {
                act = z.mapv(relu);
            }
            pre.push(z);
        }
        pre
    }

    pub fn output(&self, x: &Array2<f64>) -> Array1<f64> {
        self.forward(x).pop().unwrap().column(0).to_owned()
    }

    /// `0.5 * mean((out - t)^2)`.
    pub fn loss(&self, x: &Array2<f64>, t: &Array1<f64>) -> f64 {
        let out = self.output(x);
        0.5 * (&out - t).mapv(|e| e * e).sum() / t.len() as f64
    }

    fn loss_and_grads(&self, x: &Array2<f64>, t: &Array1<f64>) -> (f64, Grads) {
        let pre = self.forward(x);
        let n = t.len() as f64;
        let out = pre.last().unwrap().column(0).to_owned();
        let err = &out - t;
        let loss = 0.5 * err.mapv(|e| e * e).sum() / n;
        let mut delta = (err / n).insert_axis(Axis(1));
        let n_layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            let input = if l == 0 { x.clone() } else { pre[l - 1].mapv(relu) };
            gw[l] = input.t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let back = delta.dot(&self.weights[l].t());
                delta = back * pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            }
        }
        (loss, Grads { weights: gw, biases: gb })
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                return &mut w.as_slice_mut().expect("standard layout")[index];
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range")
    }

    /// Largest relative discrepancy between backpropagated gradients and
    /// central differences with the given step, over every parameter. The
    /// relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
    /// parameters with vanishing gradients from amplifying round-off.
    pub fn gradient_check(&self, x: &Array2<f64>, t: &Array1<f64>, step: f64) -> f64 {
        let (_, grads) = self.loss_and_grads(x, t);
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect();
        let mut probe = self.clone();
        let mut worst: f64 = 0.0;
        for (i, a) in analytic.iter().enumerate() {
            let orig = *probe.param_mut(i);
            *probe.param_mut(i) = orig + step;
            let up = probe.loss(x, t);
            *probe.param_mut(i) = orig - step;
            let down = probe.loss(x, t);
            *probe.param_mut(i) = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

struct Adam {
    m: Grads,
    v: Grads,
    t: i32,
}

impl Adam {
    fn new(net: &MlpNetwork) -> Self {
        let zeros = || Grads {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, net: &mut MlpNetwork, g: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let lr_t = lr * c2.sqrt() / c1;
        for l in 0..net.weights.len() {
            update(&mut net.weights[l], &mut self.m.weights[l], &mut self.v.weights[l], &g.weights[l], lr_t);
            update(&mut net.biases[l], &mut self.m.biases[l], &mut self.v.biases[l], &g.biases[l], lr_t);
        }
    }
}

fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    lr_t: f64,
) {
    ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr_t * *m / (v.sqrt() + ADAM_EPS);
    });
}

#[derive(Debug, Clone, Copy)]
struct TrainConfig {
    hidden_size: usize,
    hidden_layers: usize,
    learning_rate: f64,
    max_epochs: usize,
    batch_size: usize,
    tol: f64,
    n_iter_no_change: usize,
}

impl TrainConfig {
    fn from_spec(spec: &ModelSpec) -> Result<Self, PredictError> {
        let cfg = Self {
            hidden_size: spec.count("h_size", 64)?,
            hidden_layers: spec.count("h_num", 1)?,
            learning_rate: spec.float("learning_rate", 0.001)?,
            max_epochs: spec.count("max_epochs", 500)?,
            batch_size: spec.count("batch_size", 32)?,
            tol: spec.float("tol", 1e-4)?,
            n_iter_no_change: spec.count("n_iter_no_change", 10)?,
        };
        let bad = |name: &str, reason: &str| PredictError::BadHyperparameter { name: name.into(), reason: reason.into() };
        if cfg.hidden_size == 0 || cfg.hidden_layers == 0 {
            return Err(bad("h_size", "network needs at least one hidden unit"));
        }
        if cfg.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1"));
        }
        if !(cfg.learning_rate > 0.0) {
            return Err(bad("learning_rate", "must be > 0"));
        }
        Ok(cfg)
    }
}

/// Serializable trained network: flattened row-major weights per layer and
/// the affine map undoing target standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub epochs_run: usize,
}

fn to_matrix(z: &[[f64; N_FEATURES]]) -> Array2<f64> {
    Array2::from_shape_fn((z.len(), N_FEATURES), |(i, j)| z[i][j])
}

fn target_stats(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl MlpModel {
    pub fn fit(spec: &ModelSpec, z: &[[f64; N_FEATURES]], y: &[f64]) -> Result<Self, PredictError> {
        let cfg = TrainConfig::from_spec(spec)?;
        let hidden = hidden_sizes(cfg.hidden_size, cfg.hidden_layers);
        let (target_mean, target_sd) = target_stats(y);
        let x_all = to_matrix(z);
        let t_all = Array1::from_iter(y.iter().map(|v| (v - target_mean) / target_sd));

        let mut net = MlpNetwork::init(&hidden, spec.seed);
        let mut adam = Adam::new(&net);
        let mut rng = seed::rng_from_seed(seed::derive_seed(spec.seed, &[b"mlp-shuffle"]));
        let n = y.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut best_loss = f64::INFINITY;
        let mut stale = 0;
        let mut epochs_run = 0;
        for _ in 0..cfg.max_epochs {
            seed::shuffle(&mut rng, &mut order);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xb = x_all.select(Axis(0), chunk);
                let tb = t_all.select(Axis(0), chunk);
                let (loss, grads) = net.loss_and_grads(&xb, &tb);
                epoch_loss += loss * chunk.len() as f64;
                adam.step(&mut net, &grads, cfg.learning_rate);
            }
            epochs_run += 1;
            epoch_loss /= n as f64;
            if !epoch_loss.is_finite() {
                return Err(PredictError::NonFiniteInput("mlp training loss diverged"));
            }
            if epoch_loss > best_loss - cfg.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best_loss = best_loss.min(epoch_loss);
            if stale >= cfg.n_iter_no_change {
                break;
            }
        }

        let mut layer_sizes = vec![N_FEATURES];
        layer_sizes.extend(&hidden);
        layer_sizes.push(1);
        Ok(Self {
            layer_sizes,
            weights: net.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
            target_mean,
            target_sd,
            epochs_run,
        })
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        let mut act: Vec<f64> = z.to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[l];
            let mut next = self.biases[l].clone();
            for i in 0..fan_in {
                let a = act[i];
                if a == 0.0 {
                    continue;
                }
                let row = &w[i * fan_out..(i + 1) * fan_out];
                for (o, wv) in next.iter_mut().zip(row) {
                    *o += a * wv;
                }
            }
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = relu(*v));
            }
            act = next;
        }
        act[0] * self.target_sd + self.target_mean
    }
}

/// Gradient check for the network `spec` would initialize, on the
/// standardized problem `(x, y)`, with central differences of step 1e-5.
pub fn mlp_gradient_check(spec: &ModelSpec, x: &[FeatureVector], y: &[f64]) -> Result<f64, PredictError> {
    mlp_gradient_check_with_step(spec, x, y, 1e-5)
}

pub fn mlp_gradient_check_with_step(spec: &ModelSpec, x: &[FeatureVector], y: &[f64], step: f64) -> Result<f64, PredictError> {
    super::check_inputs(x, y)?;
    let cfg = TrainConfig::from_spec(spec)?;
    let raw: Vec<[f64; N_FEATURES]> = x.iter().map(FeatureVector::to_array).collect();
    let scaler = Scaler::fit(&raw);
    let z: Vec<[f64; N_FEATURES]> = raw.iter().map(|r| scaler.transform(r)).collect();
    let (mean, sd) = target_stats(y);
    let t = Array1::from_iter(y.iter().map(|v| (v - mean) / sd));
    let net = MlpNetwork::init(&hidden_sizes(cfg.hidden_size, cfg.hidden_layers), spec.seed);
    Ok(net.gradient_check(&to_matrix(&z), &t, step))
}
