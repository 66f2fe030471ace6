//! Small in-memory datasets with known structure for checking that the
//! policy learns.

use alloc::vec::Vec;
use libm::sin;
use rand::Rng;

use super::net::ACTION_DIM;
use crate::data::{Dataset, Horizons, NormStats, TrainingSample};
use crate::seed;

fn dataset(h: Horizons, train: Vec<TrainingSample>, val: Vec<TrainingSample>) -> Dataset {
    Dataset {
        stats: NormStats::identity(ACTION_DIM, 6),
        horizons: h,
        train_episodes: Vec::new(),
        val_episodes: Vec::new(),
        train,
        val,
    }
}

/// Actions are a fixed random linear map of a uniform observation, scaled
/// to stay inside [-1, 1].
pub fn linear_dataset(h: Horizons, n_train: usize, n_val: usize, seed_: u64) -> Dataset {
    let (d_in, d_out) = (h.obs_dim(), ACTION_DIM * h.t_p);
    let mut rng = seed::rng(&[seed_, 0]);
    let scale = 1.0 / d_in as f64;
    let map: Vec<f64> = (0..d_in * d_out).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    let draw = |n: usize, stream: u64| -> Vec<TrainingSample> {
        let mut rng = seed::rng(&[seed_, stream]);
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
                let actions =
                    (0..d_out).map(|r| (0..d_in).map(|c| map[r * d_in + c] * obs[c]).sum()).collect();
                TrainingSample { obs, actions }
            })
            .collect()
    };
    let train = draw(n_train, 1);
    let val = draw(n_val, 2);
    dataset(h, train, val)
}

/// Peak lateral excursion of the bimodal paths.
pub const BIMODAL_AMPLITUDE: f64 = 0.6;

/// Two mirror-image paths from the same observation: both descend in z
/// while bowing to +x or to −x. Even indices take +x.
pub fn bimodal_dataset(h: Horizons, n: usize, seed_: u64) -> Dataset {
    let mut rng = seed::rng(&[seed_]);
    let obs: Vec<f64> = (0..h.obs_dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let samples = (0..n)
        .map(|i| TrainingSample { obs: obs.clone(), actions: bimodal_path(h.t_p, if i % 2 == 0 { 1.0 } else { -1.0 }) })
        .collect();
    dataset(h, samples, Vec::new())
}

pub fn bimodal_path(t_p: usize, side: f64) -> Vec<f64> {
    let mut a = alloc::vec![0.0; t_p * ACTION_DIM];
    for j in 0..t_p {
        let s = (j + 1) as f64 / (t_p + 1) as f64;
        let row = &mut a[j * ACTION_DIM..(j + 1) * ACTION_DIM];
        row[0] = side * BIMODAL_AMPLITUDE * sin(core::f64::consts::PI * s);
        row[2] = 0.8 - 1.6 * s;
        // identity rotation in 6D
        row[3] = 1.0;
        row[7] = 1.0;
    }
    a
}

/// +1 or −1 when the mean lateral offset of a sampled path is at least half
/// that of the corresponding mode, else 0.
pub fn bimodal_side(actions: &[f64]) -> i8 {
    let t_p = actions.len() / ACTION_DIM;
    let mean = |a: &[f64]| (0..t_p).map(|j| a[j * ACTION_DIM]).sum::<f64>() / t_p as f64;
    let reference = mean(&bimodal_path(t_p, 1.0));
    let m = mean(actions);
    if m >= 0.5 * reference {
        1
    } else if m <= -0.5 * reference {
        -1
    } else {
        0
    }
}
