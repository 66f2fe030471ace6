//! η-interpolated DDIM reverse process (η = 0 deterministic DDIM, η = 1
//! ancestral DDPM).

use alloc::vec::Vec;
use libm::sqrt;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::schedule::NoiseSchedule;
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("inference steps {k_inf} must be in 1..={k}")]
    Steps { k_inf: usize, k: usize },
    #[error("eta {0} outside [0, 1]")]
    Eta(f64),
}

/// Anything that predicts the noise in `x` at diffusion step `k`.
pub trait NoisePredictor {
    fn predict(&mut self, x: &Tensor, k: usize) -> Tensor;
}

/// `k_i = round(i·K/K_inf)` for `i = K_inf, …, 1`: strictly decreasing.
pub fn inference_steps(k: usize, k_inf: usize) -> Result<Vec<usize>, SampleError> {
    if k_inf == 0 || k_inf > k {
        return Err(SampleError::Steps { k_inf, k });
    }
    Ok((1..=k_inf).rev().map(|i| libm::round((i * k) as f64 / k_inf as f64) as usize).collect())
}

/// Coefficients of one reverse step from `k` to `k_prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
    pub sigma: f64,
}

impl StepCoefficients {
    pub fn new(schedule: &NoiseSchedule, k: usize, k_prev: usize, eta: f64) -> Self {
        let ab = schedule.alpha_bar[k];
        let abp = schedule.alpha_bar[k_prev];
        let sigma = eta * sqrt((1.0 - abp) / (1.0 - ab)) * sqrt(1.0 - ab / abp);
        Self { alpha_bar: ab, alpha_bar_prev: abp, sigma }
    }
}

/// One reverse step. Returns `(A^{k_prev}, Â_0)`. `z` is the fresh noise
/// (ignored when σ = 0); `clip` bounds Â_0 to [-1, 1].
pub fn ddim_step(
    c: &StepCoefficients,
    x: &[f64],
    eps_hat: &[f64],
    z: Option<&[f64]>,
    clip: bool,
) -> (Vec<f64>, Vec<f64>) {
    let (sa, sn) = (sqrt(c.alpha_bar), sqrt(1.0 - c.alpha_bar));
    let a0: Vec<f64> = x
        .iter()
        .zip(eps_hat)
        .map(|(xv, e)| {
            let v = (xv - sn * e) / sa;
            if clip {
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    // with a clipped Â_0 the noise estimate is re-derived so the step stays
    // consistent
    let eps: Vec<f64> = if clip {
        x.iter().zip(&a0).map(|(xv, a)| (xv - sa * a) / sn).collect()
    } else {
        eps_hat.to_vec()
    };
    let dir = sqrt((1.0 - c.alpha_bar_prev - c.sigma * c.sigma).max(0.0));
    let sap = sqrt(c.alpha_bar_prev);
    let out = a0
        .iter()
        .zip(&eps)
        .enumerate()
        .map(|(i, (a, e))| {
            let noise = match z {
                Some(z) if c.sigma > 0.0 => c.sigma * z[i],
                _ => 0.0,
            };
            sap * a + dir * e + noise
        })
        .collect();
    (out, a0)
}

/// Runs the reverse process from `init` (pure noise at step K). The callback
/// sees every step's `(k, Â_0)`.
#[allow(clippy::too_many_arguments)]
pub fn ddim_sample_traced<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    predictor: &mut P,
    schedule: &NoiseSchedule,
    k_inf: usize,
    eta: f64,
    init: Tensor,
    clip: bool,
    rng: &mut R,
    trace: &mut dyn FnMut(usize, &[f64]),
) -> Result<Tensor, SampleError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SampleError::Eta(eta));
    }
    let steps = inference_steps(schedule.k, k_inf)?;
    let mut x = init;
    for (i, &k) in steps.iter().enumerate() {
        let k_prev = steps.get(i + 1).copied().unwrap_or(0);
        let eps = predictor.predict(&x, k);
        let c = StepCoefficients::new(schedule, k, k_prev, eta);
        let z: Option<Vec<f64>> =
            (c.sigma > 0.0).then(|| (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let (next, a0) = ddim_step(&c, &x.data, &eps.data, z.as_deref(), clip);
        trace(k, &a0);
        x.data = next;
    }
    Ok(x)
}

pub fn ddim_sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    predictor: &mut P,
    schedule: &NoiseSchedule,
    k_inf: usize,
    eta: f64,
    init: Tensor,
    clip: bool,
    rng: &mut R,
) -> Result<Tensor, SampleError> {
    ddim_sample_traced(predictor, schedule, k_inf, eta, init, clip, rng, &mut |_, _| {})
}
