//! Policy rollouts in the simulator and success-rate experiments.

mod pool;
mod report;
mod rollout;

pub use pool::pool_actions;
pub use report::{sem, summarize, ExperimentReport, OffsetSummary, RolloutRecord};
pub use rollout::{rollout, Outcome, RolloutConfig, RolloutResult};

use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::policy::{Policy, PolicyError, SampleError};
use crate::rotation::RotationError;
use crate::seed;
use crate::sim::{SimConfig, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("predicted rotation: {0}")]
    Rotation(RotationError),
    #[error("T_a = {t_a} must be in 1..={t_p}")]
    ExecutionSteps { t_a: usize, t_p: usize },
    #[error("offsets must be finite and non-negative")]
    Offsets,
    #[error("time budget {0} s must be positive")]
    TimeBudget(f64),
    #[error("action period {0} s must be positive")]
    ActionPeriod(f64),
    #[error("expected {expected} models, got {found}")]
    ModelCount { expected: usize, found: usize },
}

impl From<SampleError> for EvalError {
    fn from(e: SampleError) -> Self {
        Self::Policy(PolicyError::Sample(e))
    }
}

/// Seed of one rollout, from the experiment seed and its indices.
pub fn rollout_seed(cfg: &RolloutConfig, offset_index: usize, model: usize, repeat: usize) -> u64 {
    seed::derive(&[cfg.seed, offset_index as u64, model as u64, repeat as u64])
}

/// Random offset direction; zero offsets stay zero.
pub fn signed_offset(magnitude: f64, rollout_seed: u64) -> f64 {
    let mut rng = seed::rng(&[rollout_seed, 0x5167]);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Runs `rollouts_per_model` rollouts of every model at every offset.
/// `progress` sees each finished rollout.
pub fn evaluate(
    label: &str,
    sim_config: &SimConfig,
    models: &[Policy],
    cfg: &RolloutConfig,
    progress: &mut dyn FnMut(&RolloutRecord),
) -> Result<ExperimentReport, EvalError> {
    if models.len() != cfg.models_per_config {
        return Err(EvalError::ModelCount { expected: cfg.models_per_config, found: models.len() });
    }
    for m in models {
        cfg.validate(m.config.t_p)?;
    }
    let mut rollouts = Vec::new();
    for (oi, &mag) in cfg.offsets.iter().enumerate() {
        for (mi, model) in models.iter().enumerate() {
            for r in 0..cfg.rollouts_per_model {
                let s = rollout_seed(cfg, oi, mi, r);
                let offset = signed_offset(mag, s);
                let result = rollout(sim_config, model, cfg, offset, s, &mut |_, _| {})?;
                let rec = RolloutRecord { model: mi, offset_mm: mag, repeat: r, seed: s, result };
                progress(&rec);
                rollouts.push(rec);
            }
        }
    }
    Ok(summarize(label, cfg, models.len(), rollouts))
}
