//! Noise-prediction training with decoupled weight decay, and checkpoints.

use alloc::vec::Vec;
use libm::sqrt;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::{UNet, ACTION_DIM};
use super::schedule::{cosine_schedule, NoiseSchedule, COSINE_OFFSET};
use super::tape::Tape;
use super::tensor::Tensor;
use super::{PolicyConfig, PolicyError};
use crate::data::{Dataset, NormStats, TrainingSample};
use crate::seed;

/// AdamW (decoupled weight decay).
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: alloc::vec![0.0; n], v: alloc::vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] *= 1.0 - self.lr * self.weight_decay;
            params[i] -= self.lr * (self.m[i] / c1) / (sqrt(self.v[i] / c2) + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    /// None without a validation split.
    pub val_mse: Option<f64>,
}

/// Trained weights with everything needed to run them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: PolicyConfig,
    pub stats: NormStats,
    pub stats_hash: u64,
    pub params: Vec<f64>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochLoss>,
}

impl Checkpoint {
    pub fn network(&self) -> Result<UNet, PolicyError> {
        let net = UNet::new(self.config.arch.clone(), self.config.horizons().obs_dim(), self.config.t_p)?;
        if net.n_params != self.params.len() {
            return Err(PolicyError::ParamCount { expected: net.n_params, found: self.params.len() });
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::NonFiniteParams);
        }
        Ok(net)
    }

    /// Refuses checkpoints whose statistics were altered or belong to
    /// another dataset.
    pub fn verify_stats(&self, expected: Option<&NormStats>) -> Result<(), PolicyError> {
        let own = self.stats.fingerprint();
        if own != self.stats_hash {
            return Err(PolicyError::StatsMismatch { expected: self.stats_hash, found: own });
        }
        if let Some(e) = expected {
            let h = e.fingerprint();
            if h != own {
                return Err(PolicyError::StatsMismatch { expected: h, found: own });
            }
        }
        Ok(())
    }
}

/// Draws a training target for every sample: `(k, ε)`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, k_max: usize, len: usize) -> Vec<(usize, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=k_max);
            let eps = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (k, eps)
        })
        .collect()
}

/// Mean squared noise-prediction error over a batch and, if `grads` is
/// given, its gradient.
pub fn batch_loss(
    net: &UNet,
    schedule: &NoiseSchedule,
    params: &[f64],
    samples: &[&TrainingSample],
    noise: &[(usize, Vec<f64>)],
    grads: Option<&mut [f64]>,
) -> f64 {
    let noisy: Vec<Vec<f64>> =
        samples.iter().zip(noise).map(|(s, (k, e))| schedule.forward_noise(&s.actions, *k, e)).collect();
    let seqs: Vec<&[f64]> = noisy.iter().map(|v| &v[..]).collect();
    let obs: Vec<&[f64]> = samples.iter().map(|s| &s.obs[..]).collect();
    let eps: Vec<&[f64]> = noise.iter().map(|(_, e)| &e[..]).collect();
    let target = Tensor::from_sequences(&eps, ACTION_DIM);
    let steps: Vec<f64> = noise.iter().map(|(k, _)| *k as f64).collect();

    let mut tape = Tape::new(params);
    let a = tape.leaf(Tensor::from_sequences(&seqs, ACTION_DIM));
    let o = tape.leaf(Tensor::from_columns(&obs));
    let y = net.forward(&mut tape, a, o, &steps);
    let pred = tape.value(y);
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data.iter().zip(&target.data).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if let Some(g) = grads {
        let dout = Tensor { data: diff.iter().map(|d| 2.0 * d / n).collect(), ..*pred };
        tape.backward(y, dout, g);
    }
    loss
}

fn eval_loss(
    net: &UNet,
    schedule: &NoiseSchedule,
    params: &[f64],
    samples: &[TrainingSample],
    noise: &[(usize, Vec<f64>)],
    batch: usize,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (chunk, nz) in samples.chunks(batch).zip(noise.chunks(batch)) {
        let refs: Vec<&TrainingSample> = chunk.iter().collect();
        total += batch_loss(net, schedule, params, &refs, nz, None) * chunk.len() as f64;
        count += chunk.len();
    }
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}

/// Trains from a fresh initialization; `seed` drives initialization, batch
/// order and noise. Keeps the weights of the epoch with the lowest
/// validation loss (training loss when there is no validation split).
pub fn train(
    ds: &Dataset,
    config: &PolicyConfig,
    seed: u64,
    progress: &mut dyn FnMut(&EpochLoss),
) -> Result<Checkpoint, PolicyError> {
    config.validate()?;
    if ds.train.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    if ds.horizons != config.horizons() {
        return Err(PolicyError::HorizonMismatch);
    }
    let net = UNet::new(config.arch.clone(), config.horizons().obs_dim(), config.t_p)?;
    let schedule = cosine_schedule(config.k, COSINE_OFFSET);
    let mut params = net.init_params(&mut seed::rng(&[seed, 1]));
    let mut ema = config.ema.map(|_| params.clone());
    let mut opt = AdamW::new(params.len(), config.lr, config.weight_decay);
    let mut grads = alloc::vec![0.0; params.len()];
    let mut rng = seed::rng(&[seed, 2]);
    let len = ACTION_DIM * config.t_p;
    let val_noise = draw_noise(&mut seed::rng(&[seed, 3]), ds.val.len(), config.k, len);

    let mut order: Vec<usize> = (0..ds.train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&TrainingSample> = chunk.iter().map(|&i| &ds.train[i]).collect();
            let noise = draw_noise(&mut rng, samples.len(), config.k, len);
            grads.fill(0.0);
            let loss = batch_loss(&net, &schedule, &params, &samples, &noise, Some(&mut grads));
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(PolicyError::NonFiniteLoss { epoch, batch: bi, loss });
            }
            opt.step(&mut params, &grads);
            if let (Some(e), Some(decay)) = (ema.as_mut(), config.ema) {
                for (a, p) in e.iter_mut().zip(&params) {
                    *a = decay * *a + (1.0 - decay) * p;
                }
            }
            sum += loss * samples.len() as f64;
        }
        let train_mse = sum / ds.train.len() as f64;
        let current = ema.as_ref().unwrap_or(&params);
        let val_mse = (!ds.val.is_empty())
            .then(|| eval_loss(&net, &schedule, current, &ds.val, &val_noise, config.batch_size.max(64)));
        let score = val_mse.unwrap_or(train_mse);
        if !train_mse.is_finite() || !score.is_finite() {
            return Err(PolicyError::NonFiniteLoss { epoch, batch: usize::MAX, loss: score });
        }
        let record = EpochLoss { epoch, train_mse, val_mse };
        progress(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, current.clone()));
        }
    }
    let (best_val, best_epoch, params) = best.ok_or(PolicyError::NoEpochs)?;
    Ok(Checkpoint {
        config: config.clone(),
        stats: ds.stats.clone(),
        stats_hash: ds.stats.fingerprint(),
        params,
        best_val,
        best_epoch,
        history,
    })
}

/// Loss of a network on fixed `(k, ε)` draws, for diagnostics.
pub fn evaluate_loss(
    net: &UNet,
    params: &[f64],
    k: usize,
    samples: &[TrainingSample],
    seed: u64,
) -> f64 {
    let schedule = cosine_schedule(k, COSINE_OFFSET);
    let noise = draw_noise(&mut seed::rng(&[seed, 4]), samples.len(), k, ACTION_DIM * net.t_p);
    eval_loss(net, &schedule, params, samples, &noise, 64)
}
