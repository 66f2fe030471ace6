//! Conditional action diffusion: noise schedule, U-Net noise predictor,
//! training and η-interpolated DDIM sampling.

mod gradcheck;
mod net;
mod sampler;
mod schedule;
mod tape;
mod synthetic;
mod tensor;
mod train;

pub use gradcheck::{fit_output_layer, grad_check, GradCheck, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use net::{timestep_embedding, ArchConfig, ArchError, ParamEntry, UNet, ACTION_DIM};
pub use sampler::{
    ddim_sample, ddim_sample_traced, ddim_step, inference_steps, NoisePredictor, SampleError, StepCoefficients,
};
pub use schedule::{cosine_schedule, NoiseSchedule, COSINE_OFFSET, MAX_BETA};
pub use tape::{mish, ConvSpec, NormSpec, Tape, Var};
pub use synthetic::{bimodal_dataset, bimodal_path, bimodal_side, linear_dataset, BIMODAL_AMPLITUDE};
pub use tensor::{gemm, Tensor};
pub use train::{batch_loss, draw_noise, evaluate_loss, train, AdamW, Checkpoint, EpochLoss};

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Horizons, NormStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid architecture: {0}")]
    Arch(#[from] ArchError),
    #[error("sampling: {0}")]
    Sample(#[from] SampleError),
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("no training samples")]
    EmptyDataset,
    #[error("dataset horizons differ from the policy config")]
    HorizonMismatch,
    #[error("training ran zero epochs")]
    NoEpochs,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint has {found} parameters, architecture needs {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint contains non-finite parameters")]
    NonFiniteParams,
    #[error("normalization stats hash {found:016x} does not match {expected:016x}")]
    StatsMismatch { expected: u64, found: u64 },
    #[error("observation has {found} values, policy expects {expected}")]
    ObsDim { expected: usize, found: usize },
}

/// Training hyperparameters plus the rollout defaults stored with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub lr: f64,
    #[serde(rename = "wd", alias = "weight_decay")]
    pub weight_decay: f64,
    pub t_o_p: usize,
    pub t_o_f: usize,
    pub t_p: usize,
    pub t_a: usize,
    /// Forward noising steps.
    pub k: usize,
    pub k_inf: usize,
    pub eta: f64,
    pub arch: ArchConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_frac: f64,
    pub seed: u64,
    /// Decay of an exponential moving average of the weights; off by default.
    pub ema: Option<f64>,
    /// Bound the predicted clean actions to the normalized range while
    /// sampling.
    pub clip_sample: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            weight_decay: 1e-6,
            t_o_p: 1,
            t_o_f: 1,
            t_p: 8,
            t_a: 4,
            k: 128,
            k_inf: 32,
            eta: 0.5,
            arch: ArchConfig::default(),
            batch_size: 256,
            epochs: 600,
            val_frac: 0.1,
            seed: 0,
            ema: None,
            clip_sample: true,
        }
    }
}

impl PolicyConfig {
    /// Smaller network, larger step size and fewer epochs, sized so a
    /// 100-demo model trains on one CPU core in a few minutes.
    pub fn desk() -> Self {
        Self {
            lr: 1e-3,
            arch: ArchConfig { channels: alloc::vec![32, 64], kernel: 5, groups: 8, time_dim: 32 },
            batch_size: 64,
            epochs: 40,
            ..Self::default()
        }
    }

    pub fn horizons(&self) -> Horizons {
        Horizons { t_o_p: self.t_o_p, t_o_f: self.t_o_f, t_p: self.t_p }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m| Err(PolicyError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.t_o_p == 0 {
            return bad("pose observation horizon must be at least 1");
        }
        if self.t_p == 0 || self.t_a == 0 || self.t_a > self.t_p {
            return bad("need 1 <= T_a <= T_p");
        }
        if self.k == 0 || self.k_inf == 0 || self.k_inf > self.k {
            return bad("need 1 <= K_inf <= K");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must be in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return bad("validation fraction must be in [0, 1)");
        }
        if let Some(d) = self.ema {
            if !(0.0..1.0).contains(&d) {
                return bad("EMA decay must be in [0, 1)");
            }
        }
        self.arch.validate(self.t_p)?;
        Ok(())
    }
}

/// A loaded model ready for sampling.
#[derive(Debug, Clone)]
pub struct Policy {
    pub net: UNet,
    pub params: Vec<f64>,
    pub schedule: NoiseSchedule,
    pub config: PolicyConfig,
    pub stats: NormStats,
}

struct Conditioned<'a> {
    net: &'a UNet,
    params: &'a [f64],
    obs: Tensor,
}

impl NoisePredictor for Conditioned<'_> {
    fn predict(&mut self, x: &Tensor, k: usize) -> Tensor {
        let steps = alloc::vec![k as f64; x.b];
        self.net.predict(self.params, x.clone(), self.obs.clone(), &steps)
    }
}

impl Policy {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PolicyError> {
        ckpt.verify_stats(None)?;
        Ok(Self {
            net: ckpt.network()?,
            params: ckpt.params.clone(),
            schedule: cosine_schedule(ckpt.config.k, COSINE_OFFSET),
            config: ckpt.config.clone(),
            stats: ckpt.stats.clone(),
        })
    }

    /// Samples one normalized action sequence (`t_p` rows of 9) per
    /// observation.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[&[f64]],
        k_inf: usize,
        eta: f64,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>, PolicyError> {
        self.sample_traced(obs, k_inf, eta, rng, &mut |_, _| {})
    }

    pub fn sample_traced<R: Rng + ?Sized>(
        &self,
        obs: &[&[f64]],
        k_inf: usize,
        eta: f64,
        rng: &mut R,
        trace: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<Vec<Vec<f64>>, PolicyError> {
        for o in obs {
            if o.len() != self.net.obs_dim {
                return Err(PolicyError::ObsDim { expected: self.net.obs_dim, found: o.len() });
            }
        }
        let b = obs.len();
        let t = self.config.t_p;
        let noise: Vec<f64> = (0..ACTION_DIM * b * t).map(|_| rng.sample(StandardNormal)).collect();
        let init = Tensor::from_vec(noise, ACTION_DIM, b, t);
        let mut pred = Conditioned { net: &self.net, params: &self.params, obs: Tensor::from_columns(obs) };
        let out = ddim_sample_traced(
            &mut pred,
            &self.schedule,
            k_inf,
            eta,
            init,
            self.config.clip_sample,
            rng,
            trace,
        )?;
        Ok((0..b).map(|i| out.sequence(i)).collect())
    }
}
