use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoType {
    Nominal,
    Recovery,
    Teleop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub position: String,
    pub force: String,
    pub torque: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Self { position: "mm".into(), force: "N".into(), torque: "N·m".into(), time: "ms".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub demo_type: DemoType,
    /// Signed slot displacement, mm.
    pub mortise_offset: f64,
    pub seed: u64,
    #[serde(default)]
    pub units: Units,
    /// Failed expert attempts that were discarded before this one.
    #[serde(default)]
    pub retries: u32,
}

/// Pose record: time in ms and `[x, y, z, qw, qx, qy, qz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t: f64,
    pub v: [f64; 7],
}

/// F/T record: time in ms and `[fx, fy, fz, tx, ty, tz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchRecord {
    pub t: f64,
    pub v: [f64; 6],
}

/// One demonstration: two asynchronous sensor streams plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub meta: EpisodeMeta,
    pub pose_stream: Vec<PoseRecord>,
    pub wrench_stream: Vec<WrenchRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error("{stream} stream has {len} samples, need at least 2")]
    TooShort { stream: &'static str, len: usize },
    #[error("{stream} timestamps not strictly increasing at index {index}")]
    NonMonotonic { stream: &'static str, index: usize },
    #[error("quaternion at pose index {index} has norm {norm}")]
    NonUnitQuaternion { index: usize, norm: f64 },
    #[error("non-finite value in {stream} stream at index {index}")]
    NonFinite { stream: &'static str, index: usize },
}

impl EpisodeRecord {
    /// Active duration of the pose stream, ms.
    pub fn duration_ms(&self) -> f64 {
        match (self.pose_stream.first(), self.pose_stream.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Every structural problem in the record.
    pub fn validate(&self) -> Vec<EpisodeError> {
        let mut errors = Vec::new();
        if self.pose_stream.len() < 2 {
            errors.push(EpisodeError::TooShort { stream: "pose", len: self.pose_stream.len() });
        }
        if self.wrench_stream.len() < 2 {
            errors.push(EpisodeError::TooShort { stream: "wrench", len: self.wrench_stream.len() });
        }
        for (i, w) in self.pose_stream.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                errors.push(EpisodeError::NonMonotonic { stream: "pose", index: i + 1 });
            }
        }
        for (i, w) in self.wrench_stream.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                errors.push(EpisodeError::NonMonotonic { stream: "wrench", index: i + 1 });
            }
        }
        for (i, p) in self.pose_stream.iter().enumerate() {
            if !p.t.is_finite() || p.v.iter().any(|x| !x.is_finite()) {
                errors.push(EpisodeError::NonFinite { stream: "pose", index: i });
                continue;
            }
            let q = &p.v[3..7];
            let norm = libm::sqrt(q.iter().map(|x| x * x).sum::<f64>());
            if (norm - 1.0).abs() > 1e-9 {
                errors.push(EpisodeError::NonUnitQuaternion { index: i, norm });
            }
        }
        for (i, w) in self.wrench_stream.iter().enumerate() {
            if !w.t.is_finite() || w.v.iter().any(|x| !x.is_finite()) {
                errors.push(EpisodeError::NonFinite { stream: "wrench", index: i });
            }
        }
        errors
    }
}
