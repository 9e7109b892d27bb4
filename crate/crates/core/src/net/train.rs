use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, Codec, NetError, Noise, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_checkpoint, write_checkpoint, Adam, AdamConfig, Graph, Tensor};

pub const OPTIMIZER_FILE: &str = "optimizer.pcnw";
pub const STATE_FILE: &str = "train_state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Learning-rate multiplier applied on a plateau.
    pub decay: f64,
    pub lr_floor: f64,
    /// Epochs without relative improvement of at least `min_improvement`
    /// before the learning rate decays.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, batch_size: 8, seed: 0, decay: 0.1, lr_floor: 1e-8, patience: 10, min_improvement: 1e-3 }
    }
}

/// Everything besides weights and moments needed to resume bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub lr: f64,
    pub best_epoch_loss: f64,
    pub epochs_since_best: usize,
    pub epoch_loss_sum: f64,
    pub epoch_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    /// Estimated bits per pixel.
    pub bpp: f64,
    pub mse: f64,
    pub lr: f64,
}

pub struct Trainer<T> {
    pub model: Codec<T>,
    pub config: TrainConfig,
    pub state: TrainState,
    adam: Adam<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Codec<T>, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(NetError::Config("batch_size must be positive".into()));
        }
        if !(config.lr >= 0.0) {
            return Err(NetError::Config(format!("learning rate must be non-negative, got {}", config.lr)));
        }
        let state = TrainState {
            step: 0,
            lr: config.lr,
            best_epoch_loss: f64::INFINITY,
            epochs_since_best: 0,
            epoch_loss_sum: 0.0,
            epoch_steps: 0,
        };
        let adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
        Ok(Self { model, config, state, adam })
    }

    fn noise_rng(&self, sample: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x6e6f_6973_6500_0000);
        rng.set_stream(self.state.step * 4096 + sample as u64);
        rng
    }

    /// Forward, backward and one Adam update on `batch` (4×H×W samples).
    /// Gradients are averaged over the batch; samples run sequentially so
    /// the result is independent of scheduling.
    pub fn step(&mut self, batch: &[&Tensor<T>]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(NetError::Config("empty batch".into()));
        }
        let names: Vec<String> = self.model.params.names().map(str::to_string).collect();
        let mut grads: Vec<Vec<T>> = self.model.params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        let inv = 1.0 / batch.len() as f64;
        let (mut loss, mut bpp, mut mse) = (0.0, 0.0, 0.0);
        for (k, sample) in batch.iter().enumerate() {
            let (img, depth) = Codec::split_sample(sample)?;
            let (_, h, w) = img.chw()?;
            let noise = Noise::sample(&self.model.config, h, w, &mut self.noise_rng(k))?;
            let mut g = Graph::new();
            let bind = self.model.bind(&mut g, true);
            let xi = g.constant(img);
            let xd = g.constant(depth);
            let out = self.model.forward(&mut g, &bind, xi, xd, &noise)?;
            let l = g.value(out.loss).data()[0].to_f64_lossy();
            if !l.is_finite() {
                return Err(NetError::NonFinite { step: self.state.step, loss: l });
            }
            loss += l * inv;
            let rate = g.value(out.rate_y).data()[0].to_f64_lossy() + g.value(out.rate_z).data()[0].to_f64_lossy();
            bpp += rate / (h * w) as f64 * inv;
            mse += g.value(out.mse).data()[0].to_f64_lossy() * inv;
            let scaled = g.scale(out.loss, inv)?;
            g.backward(scaled)?;
            for (acc, name) in grads.iter_mut().zip(&names) {
                if let Some(gr) = g.grad(bind.get(name)?) {
                    for (a, &v) in acc.iter_mut().zip(gr) {
                        *a += v;
                    }
                }
            }
        }
        let grad_refs: Vec<&[T]> = grads.iter().map(Vec::as_slice).collect();
        self.adam.set_lr(self.state.lr);
        self.adam.step(&mut self.model.params.tensors_mut(), &grad_refs)?;
        let stats = StepStats { step: self.state.step, loss, bpp, mse, lr: self.state.lr };
        self.state.step += 1;
        self.state.epoch_loss_sum += loss;
        self.state.epoch_steps += 1;
        Ok(stats)
    }

    /// Closes an epoch: tracks the best mean loss and decays the learning
    /// rate after `patience` epochs without improvement. Returns the mean.
    pub fn end_epoch(&mut self) -> f64 {
        let s = &mut self.state;
        let mean = s.epoch_loss_sum / s.epoch_steps.max(1) as f64;
        if mean < s.best_epoch_loss * (1.0 - self.config.min_improvement) {
            s.best_epoch_loss = mean;
            s.epochs_since_best = 0;
        } else {
            s.epochs_since_best += 1;
            if s.epochs_since_best >= self.config.patience && s.lr > self.config.lr_floor {
                s.lr = (s.lr * self.config.decay).max(self.config.lr_floor);
                s.epochs_since_best = 0;
                log::info!("loss plateaued; learning rate now {:e}", s.lr);
            }
        }
        s.epoch_loss_sum = 0.0;
        s.epoch_steps = 0;
        mean
    }

    /// Batch indices for the current step: each epoch visits the data in a
    /// seeded permutation.
    pub fn batch_indices(&self, dataset_len: usize) -> Vec<usize> {
        let b = self.config.batch_size.min(dataset_len);
        let per_epoch = dataset_len.div_ceil(b) as u64;
        let epoch = self.state.step / per_epoch;
        let k = (self.state.step % per_epoch) as usize;
        let mut order: Vec<usize> = (0..dataset_len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x6f72_6465_7200_0000);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
        order[k * b..((k + 1) * b).min(dataset_len)].to_vec()
    }

    /// Runs until `total_steps` steps have been taken, calling `on_step`
    /// after each. Epoch boundaries follow `dataset.len() / batch_size`.
    pub fn run(&mut self, dataset: &[Tensor<T>], total_steps: u64, mut on_step: impl FnMut(&StepStats) -> Result<()>) -> Result<()> {
        if dataset.is_empty() {
            return Err(NetError::Config("no training samples".into()));
        }
        let per_epoch = dataset.len().div_ceil(self.config.batch_size.min(dataset.len())) as u64;
        while self.state.step < total_steps {
            let batch: Vec<&Tensor<T>> = self.batch_indices(dataset.len()).into_iter().map(|i| &dataset[i]).collect();
            let stats = self.step(&batch)?;
            on_step(&stats)?;
            if self.state.step % per_epoch == 0 {
                self.end_epoch();
            }
        }
        Ok(())
    }

    /// Weights, sidecar, optimizer moments and counters.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir)?;
        let (m, v) = self.adam.moments();
        let mut arrays = Vec::new();
        for (i, (name, p)) in self.model.params.iter().enumerate() {
            if let (Some(mi), Some(vi)) = (m.get(i), v.get(i)) {
                arrays.push((format!("m.{name}"), Tensor::new(p.shape().to_vec(), mi.clone())?));
                arrays.push((format!("v.{name}"), Tensor::new(p.shape().to_vec(), vi.clone())?));
            }
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, arrays.iter().map(|(n, t)| (n.as_str(), t)))?;
        let path = dir.join(OPTIMIZER_FILE);
        std::fs::write(&path, buf).map_err(io_err(&path))?;
        let path = dir.join(STATE_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self.state)?).map_err(io_err(&path))?;
        Ok(())
    }

    pub fn resume(dir: &Path, config: TrainConfig) -> Result<Self> {
        let model = Codec::load(dir)?;
        let mut t = Self::new(model, config)?;
        let path = dir.join(STATE_FILE);
        t.state = serde_json::from_str(&std::fs::read_to_string(&path).map_err(io_err(&path))?)?;
        let path = dir.join(OPTIMIZER_FILE);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let arrays: std::collections::HashMap<String, Tensor<T>> = read_checkpoint(bytes.as_slice())?.into_iter().collect();
        if !arrays.is_empty() {
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for name in t.model.params.names() {
                let get = |k: String| arrays.get(&k).map(|x| x.data().to_vec()).ok_or(NetError::MissingParam(k));
                m.push(get(format!("m.{name}"))?);
                v.push(get(format!("v.{name}"))?);
            }
            t.adam = Adam::restore(AdamConfig { lr: t.state.lr, ..AdamConfig::default() }, t.state.step, m, v)?;
        }
        Ok(t)
    }
}
