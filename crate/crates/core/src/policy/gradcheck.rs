//! Finite-difference verification of the training gradient.

use alloc::vec::Vec;
use libm::fabs;
use rand::seq::index::sample;

use super::net::{UNet, ACTION_DIM};
use super::schedule::NoiseSchedule;
use super::tape::Tape;
use super::tensor::Tensor;
use super::train::batch_loss;
use crate::data::TrainingSample;
use crate::seed;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Smallest gradient magnitude used as the relative-error denominator.
/// Below it the finite difference is dominated by rounding (about
/// `ε_mach·L/h ≈ 1e-11`), so tinier gradients are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// `(parameter index, analytic, numeric)`.
    pub probes: Vec<(usize, f64, f64)>,
}

/// Compares the analytic loss gradient with central differences at
/// `probe_count` parameters chosen by `probe_seed`.
pub fn grad_check(
    net: &UNet,
    schedule: &NoiseSchedule,
    params: &[f64],
    samples: &[TrainingSample],
    noise: &[(usize, Vec<f64>)],
    probe_count: usize,
    probe_seed: u64,
) -> GradCheck {
    let refs: Vec<&TrainingSample> = samples.iter().collect();
    let mut grads = alloc::vec![0.0; params.len()];
    batch_loss(net, schedule, params, &refs, noise, Some(&mut grads));
    let mut rng = seed::rng(&[probe_seed]);
    let idx = sample(&mut rng, params.len(), probe_count.min(params.len()));
    let mut p = params.to_vec();
    let mut probes = Vec::with_capacity(idx.len());
    let mut max_rel_err: f64 = 0.0;
    for i in idx.iter() {
        let orig = p[i];
        p[i] = orig + GRAD_CHECK_STEP;
        let up = batch_loss(net, schedule, &p, &refs, noise, None);
        p[i] = orig - GRAD_CHECK_STEP;
        let down = batch_loss(net, schedule, &p, &refs, noise, None);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let analytic = grads[i];
        let scale = fabs(analytic).max(fabs(numeric)).max(GRAD_CHECK_FLOOR);
        max_rel_err = max_rel_err.max(fabs(analytic - numeric) / scale);
        probes.push((i, analytic, numeric));
    }
    GradCheck { max_rel_err, probes }
}

/// Returns `params` with the output projection replaced by the minimum-norm
/// solution that makes the prediction on `sample` equal `eps` exactly.
/// Needs `t_p <= channels[0] + 1`.
pub fn fit_output_layer(
    net: &UNet,
    schedule: &NoiseSchedule,
    params: &[f64],
    sample: &TrainingSample,
    k: usize,
    eps: &[f64],
) -> Vec<f64> {
    let noisy = schedule.forward_noise(&sample.actions, k, eps);
    let mut tape = Tape::new(params);
    let a = tape.leaf(Tensor::from_sequences(&[&noisy], ACTION_DIM));
    let o = tape.leaf(Tensor::from_columns(&[&sample.obs]));
    let f = net.features(&mut tape, a, o, &[k as f64]);
    let h = tape.value(f);
    let (c, t) = (h.c, h.t);
    // rows of H are time steps: [features, 1]
    let row = |ti: usize| -> Vec<f64> {
        let mut r: Vec<f64> = (0..c).map(|ci| h.at(ci, 0, ti)).collect();
        r.push(1.0);
        r
    };
    let rows: Vec<Vec<f64>> = (0..t).map(row).collect();
    let mut gram = alloc::vec![0.0; t * t];
    for i in 0..t {
        for j in 0..t {
            gram[i * t + j] = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum();
        }
    }
    let out = net.output_layer();
    let mut p = params.to_vec();
    for ch in 0..ACTION_DIM {
        let target: Vec<f64> = (0..t).map(|ti| eps[ti * ACTION_DIM + ch]).collect();
        let y = solve(&gram, &target, t);
        // w = Hᵀ y
        for ci in 0..=c {
            let v: f64 = (0..t).map(|ti| rows[ti][ci] * y[ti]).sum();
            if ci < c {
                p[out.w + ch * c + ci] = v;
            } else {
                p[out.b + ch] = v;
            }
        }
    }
    p
}

/// Gaussian elimination with partial pivoting on an `n×n` system.
fn solve(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| fabs(m[i * n + col]).total_cmp(&fabs(m[j * n + col]))).unwrap();
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r * n + k] * x[k]).sum();
        x[r] = (x[r] - s) / m[r * n + r];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::train::draw_noise;
    use crate::policy::{cosine_schedule, ArchConfig};
    use rand::Rng;

    fn tiny() -> (UNet, Vec<f64>, NoiseSchedule) {
        // one level, so exactly two residual blocks before the middle
        let arch = ArchConfig { channels: alloc::vec![8], kernel: 3, groups: 2, time_dim: 8 };
        let net = UNet::new(arch, 15, 4).unwrap();
        let params = net.init_params(&mut seed::rng(&[11]));
        (net, params, cosine_schedule(16, 0.008))
    }

    fn samples(n: usize, seed_: u64) -> Vec<TrainingSample> {
        let mut rng = seed::rng(&[seed_]);
        (0..n)
            .map(|_| TrainingSample {
                obs: (0..15).map(|_| rng.random_range(-1.0..1.0)).collect(),
                actions: (0..36).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let (net, params, sched) = tiny();
        let s = samples(3, 5);
        let noise = draw_noise(&mut seed::rng(&[6]), 3, 16, 36);
        let a = grad_check(&net, &sched, &params, &s, &noise, 40, 1);
        assert!(a.max_rel_err < 1e-5, "{a:?}");
        let b = grad_check(&net, &sched, &params, &s, &noise, 40, 2);
        assert_eq!(a.max_rel_err < 1e-5, b.max_rel_err < 1e-5);
        assert!(a.probes.iter().any(|&(_, g, _)| fabs(g) > 1e-4));
    }

    #[test]
    fn fitted_output_layer_is_stationary() {
        let (net, params, sched) = tiny();
        let s = samples(1, 9);
        let noise = draw_noise(&mut seed::rng(&[10]), 1, 16, 36);
        let (k, eps) = &noise[0];
        let fitted = fit_output_layer(&net, &sched, &params, &s[0], *k, eps);
        let refs: Vec<&TrainingSample> = s.iter().collect();
        let mut g = alloc::vec![0.0; fitted.len()];
        let loss = batch_loss(&net, &sched, &fitted, &refs, &noise, Some(&mut g));
        assert!(loss < 1e-20, "{loss}");
        let out = net.output_layer();
        for ch in 0..ACTION_DIM {
            assert!(fabs(g[out.b + ch]) < 1e-10);
        }
    }
}
