use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{linear_backward, linear_forward, Activation};
use crate::nn::loss::{argmax, cross_entropy_grad};
use crate::nn::{init, AdamState, ParamId, ParamStore, Tensor};

use super::dataset::{ActivationDataset, GRID};

pub const REPORT_HEADER: &str = "tap,arch,acc_x,acc_y,acc_mean,chance,n_test";

const EVAL_BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeArch {
    Linear,
    Mlp3,
}

impl ProbeArch {
    pub fn name(self) -> &'static str {
        match self {
            ProbeArch::Linear => "linear",
            ProbeArch::Mlp3 => "mlp3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub arch: ProbeArch,
    pub hidden_dim: usize,
    /// Defaults by architecture when unset: 1e-3 linear, 1e-4 mlp3.
    pub lr: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::linear()
    }
}

impl ProbeConfig {
    pub fn linear() -> Self {
        Self {
            arch: ProbeArch::Linear,
            hidden_dim: 256,
            lr: None,
            epochs: 50,
            batch_size: 1024,
            seed: 0,
        }
    }

    pub fn mlp3() -> Self {
        Self {
            arch: ProbeArch::Mlp3,
            ..Self::linear()
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.arch {
            ProbeArch::Linear => 1e-3,
            ProbeArch::Mlp3 => 1e-4,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("probe epochs, batch_size and hidden_dim must be positive".into()));
        }
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("probe lr {lr}")));
        }
        Ok(())
    }
}

/// Linear map or three-layer ReLU MLP from an activation vector to two
/// 15-way heads (x then y), which share everything but the last layer's
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub config: ProbeConfig,
    pub input_dim: usize,
    params: ParamStore<f32>,
    layers: Vec<(ParamId, ParamId)>,
}

fn layer_names(arch: ProbeArch) -> &'static [&'static str] {
    match arch {
        ProbeArch::Linear => &["out"],
        ProbeArch::Mlp3 => &["fc1", "fc2", "out"],
    }
}

impl Probe {
    /// Uniform(±1/√fan_in) weights and biases, seeded from `config.seed`.
    pub fn new(input_dim: usize, config: &ProbeConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("probe input_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let h = config.hidden_dim;
        let dims: Vec<(usize, usize)> = match config.arch {
            ProbeArch::Linear => vec![(input_dim, 2 * GRID)],
            ProbeArch::Mlp3 => vec![(input_dim, h), (h, h), (h, 2 * GRID)],
        };
        for (name, (i, o)) in layer_names(config.arch).iter().zip(dims) {
            let bound = 1.0 / (i as f64).sqrt();
            let w = params.add(format!("{name}.weight"), init::uniform(&[o, i], bound, &mut rng));
            let b = params.add(format!("{name}.bias"), init::uniform(&[o], bound, &mut rng));
            layers.push((w, b));
        }
        Ok(Self { config: config.clone(), input_dim, params, layers })
    }

    /// Rebuilds a probe from named parameters (shapes must match).
    pub fn from_params(config: &ProbeConfig, input_dim: usize, named: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let mut p = Self::new(input_dim, config)?;
        if named.len() != p.params.len() {
            return Err(Error::Format {
                expected: format!("{} probe tensors", p.params.len()),
                found: named.len().to_string(),
            });
        }
        for (name, t) in named {
            p.params.set(&name, t)?;
        }
        Ok(p)
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    fn forward(&self, x: Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        let mut acts = vec![x];
        for (li, &(w, b)) in self.layers.iter().enumerate() {
            let mut y = linear_forward(acts.last().expect("input"), self.params.value(w), self.params.value(b))?;
            if li + 1 < self.layers.len() {
                Activation::Relu.forward(y.data_mut());
            }
            acts.push(y);
        }
        Ok(acts)
    }

    /// `[n, 30]` logits: x head in columns 0..15, y head in 15..30.
    pub fn logits(&self, x: &[f32], n: usize) -> Result<Vec<f32>> {
        let t = Tensor::new(vec![n, self.input_dim], x.to_vec())?;
        Ok(self.forward(t)?.pop().expect("output").into_data())
    }

    /// Predicted `(x, y)` per row, lowest index on ties.
    pub fn predict(&self, x: &[f32], n: usize) -> Result<Vec<(u8, u8)>> {
        let l = self.logits(x, n)?;
        Ok(l.chunks(2 * GRID)
            .map(|r| (argmax(&r[..GRID]) as u8, argmax(&r[GRID..]) as u8))
            .collect())
    }

    /// Summed two-head cross-entropy, averaged over the batch; accumulates
    /// parameter gradients.
    fn loss_and_grad(&mut self, x: Tensor<f32>, xs: &[u8], ys: &[u8]) -> Result<f64> {
        let n = xs.len();
        let acts = self.forward(x)?;
        let out = acts.last().expect("output").data();
        let mut grad = vec![0f32; out.len()];
        let mut loss = 0.0;
        let inv = 1.0 / n as f32;
        for r in 0..n {
            let row = &out[r * 2 * GRID..(r + 1) * 2 * GRID];
            let (lx, gx) = cross_entropy_grad(&row[..GRID], xs[r] as usize)?;
            let (ly, gy) = cross_entropy_grad(&row[GRID..], ys[r] as usize)?;
            loss += (lx + ly) as f64;
            let g = &mut grad[r * 2 * GRID..(r + 1) * 2 * GRID];
            g[..GRID].iter_mut().zip(gx).for_each(|(a, b)| *a = b * inv);
            g[GRID..].iter_mut().zip(gy).for_each(|(a, b)| *a = b * inv);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("probe loss".into()));
        }
        for li in (0..self.layers.len()).rev() {
            if li + 1 < self.layers.len() {
                Activation::Relu.backward(acts[li + 1].data(), &mut grad);
            }
            let (w, b) = self.layers[li];
            let (values, mut grads) = self.params.split_mut();
            let [gw, gb] = grads.many([w, b]);
            grad = linear_backward(&acts[li], &values[w], &grad, gw, gb).into_data();
        }
        Ok(loss / n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub probe: Probe,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Adam over seeded-shuffled minibatches for `config.epochs` epochs.
pub fn train_probe(train: &ActivationDataset, config: &ProbeConfig) -> Result<TrainedProbe> {
    train.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    let mut probe = Probe::new(train.dim, config)?;
    let mut adam = AdamState::for_store(&probe.params, config.learning_rate());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let d = train.dim;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let mut x = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                x.extend_from_slice(train.record(i));
            }
            let xs: Vec<u8> = idx.iter().map(|&i| train.xs[i]).collect();
            let ys: Vec<u8> = idx.iter().map(|&i| train.ys[i]).collect();
            probe.params.zero_grad();
            let loss = probe.loss_and_grad(Tensor::new(vec![idx.len(), d], x)?, &xs, &ys)?;
            adam.step(&mut probe.params)?;
            total += loss * idx.len() as f64;
        }
        epoch_losses.push(total / train.len() as f64);
    }
    Ok(TrainedProbe { probe, epoch_losses })
}

/// `1 / (15 − 2·margin)`.
pub fn chance_level(margin: u8) -> f64 {
    1.0 / (GRID as f64 - 2.0 * margin as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub tap: String,
    pub arch: ProbeArch,
    pub acc_x: f64,
    pub acc_y: f64,
    pub acc_mean: f64,
    pub chance: f64,
    pub n_test: usize,
    pub margin: u8,
}

impl ProbeReport {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.tap,
            self.arch.name(),
            self.acc_x,
            self.acc_y,
            self.acc_mean,
            self.chance,
            self.n_test
        )
    }
}

/// Per-axis argmax accuracy on `test`.
pub fn evaluate_probe(probe: &Probe, test: &ActivationDataset) -> Result<ProbeReport> {
    if test.is_empty() {
        return Err(Error::Dataset("empty test set".into()));
    }
    if test.dim != probe.input_dim {
        return Err(Error::Dataset(format!("test dim {} != probe input {}", test.dim, probe.input_dim)));
    }
    let (mut hx, mut hy) = (0usize, 0usize);
    let d = test.dim;
    for start in (0..test.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(test.len());
        let preds = probe.predict(&test.activations[start * d..end * d], end - start)?;
        for (i, (px, py)) in preds.into_iter().enumerate() {
            hx += (px == test.xs[start + i]) as usize;
            hy += (py == test.ys[start + i]) as usize;
        }
    }
    let n = test.len() as f64;
    let (acc_x, acc_y) = (hx as f64 / n, hy as f64 / n);
    Ok(ProbeReport {
        tap: test.tap.clone(),
        arch: probe.config.arch,
        acc_x,
        acc_y,
        acc_mean: (acc_x + acc_y) / 2.0,
        chance: chance_level(test.margin),
        n_test: test.len(),
        margin: test.margin,
    })
}
