//! Idle-step removal and fixed-length subsampling.

use alloc::vec::Vec;
use libm::sqrt;

use super::DataError;
use crate::rotation::Quat;

/// Motion between two 7D poses: ‖Δp‖ (mm) + λ·|Δangle| (deg).
pub fn step_motion(a: &[f64; 7], b: &[f64; 7], lambda: f64) -> f64 {
    let dp = sqrt((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2));
    let qa = Quat::new(a[3], a[4], a[5], a[6]);
    let qb = Quat::new(b[3], b[4], b[5], b[6]);
    dp + lambda * qa.angle_to(qb).to_degrees()
}

/// Drops poses that moved less than `threshold` from the previous kept pose.
/// The first pose is always kept. Returns the kept poses and their indices.
pub fn derive_actions(poses: &[[f64; 7]], threshold: f64, lambda: f64) -> Result<(Vec<[f64; 7]>, Vec<usize>), DataError> {
    if poses.len() < 2 {
        return Err(DataError::TooShort { len: poses.len(), need: 2 });
    }
    let mut kept = alloc::vec![0usize];
    for i in 1..poses.len() {
        let last = kept[kept.len() - 1];
        if step_motion(&poses[last], &poses[i], lambda) >= threshold {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(DataError::AllIdle);
    }
    Ok((kept.iter().map(|&i| poses[i]).collect(), kept))
}

/// `n` indices spread uniformly over `0..len`, both endpoints included.
pub fn subsample_indices(len: usize, n: usize) -> Vec<usize> {
    if n == 1 || len <= 1 {
        return alloc::vec![0; n];
    }
    (0..n).map(|i| libm::round((i * (len - 1)) as f64 / (n - 1) as f64) as usize).collect()
}

pub fn subsample_64<T: Copy>(xs: &[T]) -> Vec<T> {
    subsample_indices(xs.len(), 64).into_iter().map(|i| xs[i]).collect()
}
