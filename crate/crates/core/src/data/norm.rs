//! Per-dimension min-max scaling to [-1, 1].

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Ranges narrower than this are treated as constant.
pub const DEGENERATE_RANGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit<'a, I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = alloc::vec![f64::INFINITY; dim];
        let mut max = alloc::vec![f64::NEG_INFINITY; dim];
        for r in rows {
            for d in 0..dim {
                min[d] = min[d].min(r[d]);
                max[d] = max[d].max(r[d]);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn is_degenerate(&self, d: usize) -> bool {
        self.max[d] - self.min[d] < DEGENERATE_RANGE
    }

    pub fn degenerate_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&d| self.is_degenerate(d)).collect()
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for (d, v) in x.iter_mut().enumerate() {
            *v = if self.is_degenerate(d) { 0.0 } else { 2.0 * (*v - self.min[d]) / (self.max[d] - self.min[d]) - 1.0 };
        }
    }

    pub fn denormalize(&self, x: &mut [f64]) {
        for (d, v) in x.iter_mut().enumerate() {
            *v = if self.is_degenerate(d) { self.min[d] } else { (*v + 1.0) / 2.0 * (self.max[d] - self.min[d]) + self.min[d] };
        }
    }
}

/// Normalization for every network input and output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub pose: MinMax,
    pub wrench: MinMax,
    pub action: MinMax,
    /// Mean time between trajectory rows in the fitted data, s. Rollouts
    /// replay predicted actions at this spacing; 0 means one command period.
    #[serde(default)]
    pub step_period: f64,
}

impl NormStats {
    /// Stats that map [-1, 1] onto itself.
    pub fn identity(pose_dim: usize, wrench_dim: usize) -> Self {
        let unit = |d| MinMax { min: alloc::vec![-1.0; d], max: alloc::vec![1.0; d] };
        Self { pose: unit(pose_dim), wrench: unit(wrench_dim), action: unit(pose_dim), step_period: 0.0 }
    }

    /// FNV-1a over the bit patterns, used to tie checkpoints to datasets.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in [&self.pose, &self.wrench, &self.action] {
            for v in m.min.iter().chain(&m.max) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        for b in self.step_period.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extremes_map_to_unit_bounds() {
        let rows = [[0.0, 5.0], [10.0, 5.0], [4.0, 5.0]];
        let m = MinMax::fit(2, rows.iter().map(|r| &r[..]));
        let mut lo = [0.0, 5.0];
        let mut hi = [10.0, 5.0];
        m.normalize(&mut lo);
        m.normalize(&mut hi);
        assert_eq!(lo, [-1.0, 0.0]);
        assert_eq!(hi, [1.0, 0.0]);
        m.denormalize(&mut hi);
        assert_eq!(hi, [10.0, 5.0]);
        assert_eq!(m.degenerate_dims(), [1]);
    }

    proptest! {
        #[test]
        fn round_trip(lo in -100.0..0.0f64, span in 0.01..100.0f64, u in 0.0..1.0f64) {
            let m = MinMax { min: alloc::vec![lo], max: alloc::vec![lo + span] };
            let x = lo + u * span;
            let mut v = [x];
            m.normalize(&mut v);
            prop_assert!(v[0] >= -1.0 && v[0] <= 1.0);
            m.denormalize(&mut v);
            prop_assert!((v[0] - x).abs() < 1e-12 * (1.0 + x.abs()) * 10.0);
        }
    }
}
