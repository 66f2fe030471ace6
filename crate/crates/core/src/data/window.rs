//! Observation/action windows over a fixed-length trajectory.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Trajectory;

/// Observation and prediction horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Horizons {
    /// Pose history length.
    pub t_o_p: usize,
    /// Wrench history length; 0 drops force from the observation.
    pub t_o_f: usize,
    /// Predicted action steps.
    pub t_p: usize,
}

impl Horizons {
    pub fn obs_dim(&self) -> usize {
        9 * self.t_o_p + 6 * self.t_o_f
    }
}

/// `obs` is `[poses oldest→newest, wrenches oldest→newest]`; `actions` is
/// `t_p` rows of 9, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
}

/// Builds the observation vector at step `t` from pose and wrench rows,
/// replicating the first row where the history runs off the start.
pub fn observation(poses: &[[f64; 9]], wrenches: &[[f64; 6]], t: usize, h: &Horizons) -> Vec<f64> {
    let mut obs = Vec::with_capacity(h.obs_dim());
    for j in 0..h.t_o_p {
        let i = (t + j + 1).saturating_sub(h.t_o_p);
        obs.extend_from_slice(&poses[i]);
    }
    for j in 0..h.t_o_f {
        let i = (t + j + 1).saturating_sub(h.t_o_f);
        obs.extend_from_slice(&wrenches[i]);
    }
    obs
}

/// One sample per step; futures past the end repeat the final pose.
pub fn window_samples(traj: &Trajectory, h: &Horizons) -> Vec<TrainingSample> {
    let n = traj.poses.len();
    (0..n)
        .map(|t| {
            let mut actions = Vec::with_capacity(9 * h.t_p);
            for j in 1..=h.t_p {
                actions.extend_from_slice(&traj.poses[(t + j).min(n - 1)]);
            }
            TrainingSample { obs: observation(&traj.poses, &traj.wrenches, t, h), actions }
        })
        .collect()
}
