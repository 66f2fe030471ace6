//! Moving-average smoothing of predicted action sequences.

use alloc::vec::Vec;

/// Kernel `t_a − 1` moving average over time, per dimension, with edge
/// replication so the length is preserved. Identity for `t_a ≤ 2`.
pub fn pool_actions<const N: usize>(a: &[[f64; N]], t_a: usize) -> Vec<[f64; N]> {
    if t_a <= 2 || a.is_empty() {
        return a.to_vec();
    }
    let w = t_a - 1;
    let left = (w - 1) / 2;
    let last = a.len() - 1;
    (0..a.len())
        .map(|i| {
            let mut acc = [0.0; N];
            for j in 0..w {
                let src = (i + j).saturating_sub(left).min(last);
                for (d, v) in acc.iter_mut().enumerate() {
                    *v += a[src][d];
                }
            }
            acc.map(|v| v / w as f64)
        })
        .collect()
}
