//! Preprocessing from raw episodes to normalized training samples:
//! 60 Hz alignment, Butterworth smoothing, idle removal, 64-point
//! subsampling, 6D rotations, min-max scaling and windowing.

mod actions;
mod filter;
mod norm;
mod resample;
mod window;

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::{derive_actions, step_motion, subsample_64, subsample_indices};
pub use filter::{Butterworth, Section};
pub use norm::{MinMax, NormStats, DEGENERATE_RANGE};
pub use resample::{grid, resample_60hz, AlignedTrajectory, ALIGNED_RATE_HZ};
pub use window::{observation, window_samples, Horizons, TrainingSample};

use crate::demo::EpisodeRecord;
use crate::rotation::{quat_to_rot6d, Quat};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("stream has {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("pose and wrench streams do not overlap in time")]
    NoOverlap,
    #[error("cannot design order-{order} low-pass at {cutoff_hz} Hz for fs = {fs_hz} Hz")]
    FilterDesign { order: usize, cutoff_hz: f64, fs_hz: f64 },
    #[error("every step is idle")]
    AllIdle,
    #[error("no training episodes")]
    Empty,
}

/// Preprocessing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub pose_order: usize,
    pub pose_cutoff_hz: f64,
    pub wrench_order: usize,
    pub wrench_cutoff_hz: f64,
    pub idle_threshold: f64,
    /// mm per degree in the idle metric.
    pub idle_lambda: f64,
    pub points: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            pose_order: 4,
            pose_cutoff_hz: 1.0,
            wrench_order: 1,
            wrench_cutoff_hz: 10.0,
            idle_threshold: 0.05,
            idle_lambda: 1.0,
            points: 64,
        }
    }
}

/// A fixed-length trajectory of 9D poses (position + 6D rotation) and
/// wrenches, in physical or normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<[f64; 9]>,
    pub wrenches: Vec<[f64; 6]>,
    /// Mean time between rows, s.
    pub step_period: f64,
}

pub fn pose7_to_pose9(p: &[f64; 7]) -> [f64; 9] {
    let r = quat_to_rot6d(Quat::new(p[3], p[4], p[5], p[6]).normalized());
    [p[0], p[1], p[2], r[0], r[1], r[2], r[3], r[4], r[5]]
}

/// Smoothed 60 Hz streams before idle removal.
pub fn smooth(aligned: &mut AlignedTrajectory, cfg: &PrepConfig) -> Result<(), DataError> {
    let fs = resample::ALIGNED_RATE_HZ;
    let pose_filter = Butterworth::lowpass(cfg.pose_order, cfg.pose_cutoff_hz, fs)?;
    let wrench_filter = Butterworth::lowpass(cfg.wrench_order, cfg.wrench_cutoff_hz, fs)?;
    pose_filter.filtfilt_rows(&mut aligned.poses);
    for p in aligned.poses.iter_mut() {
        let q = Quat::new(p[3], p[4], p[5], p[6]).normalized();
        p[3..7].copy_from_slice(&q.to_array());
    }
    wrench_filter.filtfilt_rows(&mut aligned.wrenches);
    Ok(())
}

/// Raw episode to a `cfg.points`-step trajectory in physical units.
pub fn preprocess(ep: &EpisodeRecord, cfg: &PrepConfig) -> Result<Trajectory, DataError> {
    let mut aligned = resample_60hz(ep)?;
    smooth(&mut aligned, cfg)?;
    let (kept, idx) = derive_actions(&aligned.poses, cfg.idle_threshold, cfg.idle_lambda)?;
    let pick = subsample_indices(kept.len(), cfg.points);
    let span = (idx[pick[pick.len() - 1]] - idx[pick[0]]) as f64 / resample::ALIGNED_RATE_HZ;
    Ok(Trajectory {
        poses: pick.iter().map(|&i| pose7_to_pose9(&kept[i])).collect(),
        wrenches: pick.iter().map(|&i| aligned.wrenches[idx[i]]).collect(),
        step_period: span / (pick.len().max(2) - 1) as f64,
    })
}

pub fn fit_stats(trajs: &[&Trajectory]) -> Result<NormStats, DataError> {
    if trajs.is_empty() {
        return Err(DataError::Empty);
    }
    let pose = MinMax::fit(9, trajs.iter().flat_map(|t| t.poses.iter().map(|p| &p[..])));
    let wrench = MinMax::fit(6, trajs.iter().flat_map(|t| t.wrenches.iter().map(|w| &w[..])));
    let step_period = trajs.iter().map(|t| t.step_period).sum::<f64>() / trajs.len() as f64;
    Ok(NormStats { action: pose.clone(), pose, wrench, step_period })
}

pub fn normalize_trajectory(t: &Trajectory, stats: &NormStats) -> Trajectory {
    let mut out = t.clone();
    for p in out.poses.iter_mut() {
        stats.pose.normalize(p);
    }
    for w in out.wrenches.iter_mut() {
        stats.wrench.normalize(w);
    }
    out
}

/// Seeded per-episode split: `(train, val)` indices, each sorted. At least
/// one episode stays in training.
pub fn split_episodes(n: usize, val_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(&[seed, 0x5911]));
    let n_val = (libm::round(n as f64 * val_frac) as usize).min(n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Normalized windows ready for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub stats: NormStats,
    pub horizons: Horizons,
    pub train_episodes: Vec<usize>,
    pub val_episodes: Vec<usize>,
    pub train: Vec<TrainingSample>,
    pub val: Vec<TrainingSample>,
}

pub fn build_dataset(trajs: &[Trajectory], horizons: Horizons, val_frac: f64, seed: u64) -> Result<Dataset, DataError> {
    let (train_episodes, val_episodes) = split_episodes(trajs.len(), val_frac, seed);
    let train_refs: Vec<&Trajectory> = train_episodes.iter().map(|&i| &trajs[i]).collect();
    let stats = fit_stats(&train_refs)?;
    Ok(dataset_from_split(trajs, train_episodes, val_episodes, stats, horizons))
}

/// Windows a fixed split with given statistics, e.g. from a saved manifest.
pub fn dataset_from_split(
    trajs: &[Trajectory],
    train_episodes: Vec<usize>,
    val_episodes: Vec<usize>,
    stats: NormStats,
    horizons: Horizons,
) -> Dataset {
    let windows = |ids: &[usize]| -> Vec<TrainingSample> {
        ids.iter().flat_map(|&i| window_samples(&normalize_trajectory(&trajs[i], &stats), &horizons)).collect()
    };
    Dataset {
        train: windows(&train_episodes),
        val: windows(&val_episodes),
        stats,
        horizons,
        train_episodes,
        val_episodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{scripted_demo, ExpertParams, Variant};
    use crate::sim::SimConfig;

    #[test]
    fn scripted_episode_runs_through_the_pipeline() {
        let ep = scripted_demo(&SimConfig::default(), Variant::Nominal, 2.0, 3, &ExpertParams::default()).unwrap();
        let t = preprocess(&ep, &PrepConfig::default()).unwrap();
        assert_eq!(t.poses.len(), 64);
        assert_eq!(t.wrenches.len(), 64);
        let duration = (ep.pose_stream.last().unwrap().t - ep.pose_stream[0].t) / 1e3;
        assert!((t.step_period * 63.0 - duration).abs() < 0.1, "{} vs {duration}", t.step_period);
        // starts high and tilted, ends deep and straight
        assert!(t.poses[0][2] > 10.0);
        assert!(t.poses[63][2] < -30.0);
        for p in &t.poses {
            let c1 = [p[3], p[4], p[5]];
            let c2 = [p[6], p[7], p[8]];
            let dot: f64 = c1.iter().zip(&c2).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-6);
            assert!((crate::rotation::dot3(c1, c1) - 1.0).abs() < 1e-6);
        }
        let ds = build_dataset(&[t.clone(), t], Horizons { t_o_p: 1, t_o_f: 1, t_p: 8 }, 0.5, 0).unwrap();
        assert_eq!(ds.train.len(), 64);
        assert_eq!(ds.val.len(), 64);
        for s in &ds.train {
            assert!(s.obs.iter().chain(&s.actions).all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let (tr, va) = split_episodes(100, 0.1, 4);
        assert_eq!(va.len(), 10);
        assert_eq!(tr.len(), 90);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_episodes(1, 0.5, 0).1.len(), 0);
    }
}
