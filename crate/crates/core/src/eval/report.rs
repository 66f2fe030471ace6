//! Success-rate aggregation across models and offsets.

use alloc::string::String;
use alloc::vec::Vec;
use libm::sqrt;
use serde::{Deserialize, Serialize};

use super::rollout::{Outcome, RolloutConfig, RolloutResult};

/// One rollout with the indices needed to replay it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub model: usize,
    /// Offset magnitude, mm.
    pub offset_mm: f64,
    pub repeat: usize,
    pub seed: u64,
    pub result: RolloutResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSummary {
    pub offset_mm: f64,
    /// Percent over all rollouts at this offset.
    pub avg_sr: f64,
    /// Percent, across models.
    pub sem: f64,
    /// Percent per model.
    pub per_model: Vec<f64>,
    pub protective_stops: usize,
    pub timeouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub config: RolloutConfig,
    pub offsets: Vec<OffsetSummary>,
    /// Mean of the per-offset success rates.
    pub avg_total_sr: f64,
    pub rollouts: Vec<RolloutRecord>,
}

impl ExperimentReport {
    pub fn sr_at(&self, offset_mm: f64) -> Option<f64> {
        self.offsets.iter().find(|o| o.offset_mm == offset_mm).map(|o| o.avg_sr)
    }
}

/// Sample standard deviation over √n; zero for fewer than two values.
pub fn sem(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    sqrt(var) / sqrt(n as f64)
}

/// Groups rollouts by offset (in `cfg.offsets` order) and model.
pub fn summarize(label: &str, cfg: &RolloutConfig, models: usize, rollouts: Vec<RolloutRecord>) -> ExperimentReport {
    let offsets: Vec<OffsetSummary> = cfg
        .offsets
        .iter()
        .map(|&off| {
            let at: Vec<&RolloutRecord> = rollouts.iter().filter(|r| r.offset_mm == off).collect();
            let rate = |rs: &[&RolloutRecord]| {
                if rs.is_empty() {
                    0.0
                } else {
                    100.0 * rs.iter().filter(|r| r.result.outcome == Outcome::Success).count() as f64 / rs.len() as f64
                }
            };
            let per_model: Vec<f64> = (0..models)
                .map(|m| rate(&at.iter().copied().filter(|r| r.model == m).collect::<Vec<_>>()))
                .collect();
            OffsetSummary {
                offset_mm: off,
                avg_sr: rate(&at),
                sem: sem(&per_model),
                per_model,
                protective_stops: at.iter().filter(|r| r.result.outcome == Outcome::ProtectiveStop).count(),
                timeouts: at.iter().filter(|r| r.result.outcome == Outcome::Timeout).count(),
            }
        })
        .collect();
    let avg_total_sr =
        if offsets.is_empty() { 0.0 } else { offsets.iter().map(|o| o.avg_sr).sum::<f64>() / offsets.len() as f64 };
    ExperimentReport { label: label.into(), config: cfg.clone(), offsets, avg_total_sr, rollouts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: usize, offset_mm: f64, ok: bool) -> RolloutRecord {
        RolloutRecord {
            model,
            offset_mm,
            repeat: 0,
            seed: 0,
            result: RolloutResult {
                outcome: if ok { Outcome::Success } else { Outcome::Timeout },
                offset: offset_mm,
                steps: 0,
                inferences: 0,
                depth: 0.0,
                duration: 0.0,
                max_obs_age_ms: 0.0,
            },
        }
    }

    fn batch(offset: f64, successes: &[usize]) -> Vec<RolloutRecord> {
        successes
            .iter()
            .enumerate()
            .flat_map(|(m, &s)| (0..5).map(move |r| record(m, offset, r < s)))
            .collect()
    }

    #[test]
    fn sem_example() {
        let cfg = RolloutConfig { offsets: alloc::vec![5.0], ..Default::default() };
        let r = summarize("x", &cfg, 4, batch(5.0, &[5, 4, 3, 4]));
        let o = &r.offsets[0];
        assert!((o.avg_sr - 80.0).abs() < 1e-9);
        assert_eq!(o.per_model, [100.0, 80.0, 60.0, 80.0]);
        assert!((o.sem - 8.1650).abs() < 1e-3, "{}", o.sem);
        assert_eq!(o.timeouts, 4);
    }

    #[test]
    fn total_is_mean_of_offsets() {
        let cfg = RolloutConfig::default();
        let mut rs = batch(0.0, &[5, 5, 5, 5]);
        rs.extend(batch(5.0, &[4, 3, 3, 3]));
        rs.extend(batch(10.0, &[3, 3, 3, 3]));
        let r = summarize("x", &cfg, 4, rs);
        assert_eq!(r.sr_at(0.0), Some(100.0));
        assert_eq!(r.sr_at(5.0), Some(65.0));
        assert_eq!(r.sr_at(10.0), Some(60.0));
        assert!((r.avg_total_sr - 75.0).abs() < 1e-12);
    }

    #[test]
    fn all_failures() {
        let cfg = RolloutConfig { offsets: alloc::vec![0.0], ..Default::default() };
        let r = summarize("x", &cfg, 4, batch(0.0, &[0, 0, 0, 0]));
        assert_eq!((r.avg_total_sr, r.offsets[0].sem), (0.0, 0.0));
    }
}
