//! Squared-cosine noise schedule and the forward (noising) process.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use libm::{cos, sqrt};
use serde::{Deserialize, Serialize};

pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub k: usize,
    pub s: f64,
    /// `alpha_bar[0..=k]`, with `alpha_bar[0] = 1`.
    pub alpha_bar: Vec<f64>,
    /// `beta[1..=k]`; `beta[0]` is unused and 0.
    pub beta: Vec<f64>,
}

pub fn cosine_schedule(k: usize, s: f64) -> NoiseSchedule {
    assert!(k >= 1, "schedule needs at least one step");
    let f = |i: usize| {
        let c = cos((i as f64 / k as f64 + s) / (1.0 + s) * FRAC_PI_2);
        c * c
    };
    let f0 = f(0);
    let mut alpha_bar = alloc::vec![1.0];
    let mut beta = alloc::vec![0.0];
    for i in 1..=k {
        let b = (1.0 - f(i) / f(i - 1)).min(MAX_BETA);
        beta.push(b);
        // accumulate through the clipped betas so both arrays agree
        let prev = alpha_bar[i - 1];
        alpha_bar.push(if b < MAX_BETA { f(i) / f0 } else { prev * (1.0 - b) });
    }
    NoiseSchedule { k, s, alpha_bar, beta }
}

impl NoiseSchedule {
    /// `A^k = √ᾱ_k·A^0 + √(1−ᾱ_k)·ε`.
    pub fn forward_noise(&self, a0: &[f64], k: usize, eps: &[f64]) -> Vec<f64> {
        let ab = self.alpha_bar[k];
        let (sa, sn) = (sqrt(ab), sqrt(1.0 - ab));
        a0.iter().zip(eps).map(|(a, e)| sa * a + sn * e).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn endpoints_and_monotonicity() {
        let s = cosine_schedule(128, COSINE_OFFSET);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert!(s.alpha_bar[128] < 1e-3);
        for w in s.alpha_bar.windows(2) {
            assert!(w[1] < w[0]);
        }
        for &b in &s.beta[1..] {
            assert!(b > 0.0 && b <= MAX_BETA);
        }
        // closed form away from the clipped tail
        let f = |i: f64| cos((i / 128.0 + 0.008) / 1.008 * FRAC_PI_2).powi(2);
        assert!((s.alpha_bar[64] - f(64.0) / f(0.0)).abs() < 1e-15);
    }

    #[test]
    fn forward_noise_limits() {
        let s = cosine_schedule(16, COSINE_OFFSET);
        let a0 = [0.3, -0.7];
        assert_eq!(s.forward_noise(&a0, 0, &[5.0, 5.0]), a0);
        let k = 5;
        let out = s.forward_noise(&a0, k, &[0.0, 0.0]);
        assert_eq!(out, [sqrt(s.alpha_bar[k]) * 0.3, sqrt(s.alpha_bar[k]) * -0.7]);
    }

    #[test]
    fn forward_noise_variance() {
        let s = cosine_schedule(128, COSINE_OFFSET);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = 40;
        let n = 10_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let x = s.forward_noise(&[0.0], k, &[e])[0];
            sum2 += x * x;
        }
        let var = sum2 / n as f64;
        let want = 1.0 - s.alpha_bar[k];
        assert!((var / want - 1.0).abs() < 0.03, "{var} vs {want}");
    }
}
