//! Sensor stream recording at the cell's native rates: pose every 12 ms and
//! anti-aliased F/T at 64 Hz.

use alloc::vec::Vec;
use core::f64::consts::PI;
use thiserror::Error;

use super::episode::{EpisodeMeta, EpisodeRecord, PoseRecord, WrenchRecord};
use crate::sim::{PlanarPose, Substep};

pub const POSE_PERIOD_MS: f64 = 12.0;
pub const WRENCH_PERIOD_MS: f64 = 1000.0 / 64.0;
/// Cutoff of the F/T anti-aliasing filter, below the 32 Hz Nyquist limit of
/// the 64 Hz output.
pub const ANTI_ALIAS_CUTOFF_HZ: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("nothing was recorded (trigger never held)")]
    Empty,
}

/// First-order exponential low-pass, run at a variable sample interval.
#[derive(Debug, Clone)]
pub struct FirstOrderLowPass<const N: usize> {
    rc: f64,
    state: Option<[f64; N]>,
}

impl<const N: usize> FirstOrderLowPass<N> {
    pub fn new(cutoff_hz: f64) -> Self {
        Self { rc: 1.0 / (2.0 * PI * cutoff_hz), state: None }
    }

    pub fn update(&mut self, x: [f64; N], dt: f64) -> [f64; N] {
        let alpha = dt / (self.rc + dt);
        let y = match self.state {
            None => x,
            Some(prev) => {
                let mut y = prev;
                for i in 0..N {
                    y[i] += alpha * (x[i] - prev[i]);
                }
                y
            }
        };
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> Option<[f64; N]> {
        self.state
    }
}

#[derive(Debug, Clone, Copy)]
struct Snapshot {
    t_ms: f64,
    pose: PlanarPose,
    wrench: [f64; 6],
}

/// Samples the simulator's substep stream onto the 12 ms pose grid and the
/// 15.625 ms F/T grid. Samples are stored only while active; the latest
/// sample of each stream is always available, as from a ring buffer.
#[derive(Debug, Clone)]
pub struct StreamRecorder {
    filter: FirstOrderLowPass<6>,
    active: bool,
    next_pose: u64,
    next_wrench: u64,
    prev: Snapshot,
    latest_pose: PoseRecord,
    latest_wrench: WrenchRecord,
    poses: Vec<PoseRecord>,
    wrenches: Vec<WrenchRecord>,
}

impl StreamRecorder {
    /// Starts at `clock` seconds with the tenon at `pose` and no load.
    pub fn new(clock: f64, pose: PlanarPose, active: bool) -> Self {
        let t_ms = clock * 1e3;
        let next_pose = libm::ceil(t_ms / POSE_PERIOD_MS) as u64;
        let next_wrench = libm::ceil(t_ms / WRENCH_PERIOD_MS) as u64;
        let mut filter = FirstOrderLowPass::new(ANTI_ALIAS_CUTOFF_HZ);
        filter.update([0.0; 6], 0.0);
        let mut r = Self {
            filter,
            active,
            next_pose,
            next_wrench,
            prev: Snapshot { t_ms, pose, wrench: [0.0; 6] },
            latest_pose: PoseRecord { t: t_ms, v: pose.to_pose7() },
            latest_wrench: WrenchRecord { t: t_ms, v: [0.0; 6] },
            poses: Vec::new(),
            wrenches: Vec::new(),
        };
        r.emit_until(r.prev);
        r
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn set_active(&mut self, active: bool) {
        self.active = active;
    }

    pub fn latest_pose(&self) -> &PoseRecord {
        &self.latest_pose
    }

    pub fn latest_wrench(&self) -> &WrenchRecord {
        &self.latest_wrench
    }

    /// Current output of the anti-aliasing filter.
    pub fn filtered_wrench(&self) -> [f64; 6] {
        self.prev.wrench
    }

    pub fn poses(&self) -> &[PoseRecord] {
        &self.poses
    }

    pub fn wrenches(&self) -> &[WrenchRecord] {
        &self.wrenches
    }

    pub fn observe(&mut self, sub: &Substep) {
        let t_ms = sub.clock * 1e3;
        let dt = (t_ms - self.prev.t_ms) * 1e-3;
        let wrench = self.filter.update(sub.wrench, dt);
        let now = Snapshot { t_ms, pose: sub.pose, wrench };
        self.emit_until(now);
        self.prev = now;
    }

    fn emit_until(&mut self, now: Snapshot) {
        let prev = self.prev;
        let lerp = |t: f64| -> f64 {
            let span = now.t_ms - prev.t_ms;
            if span <= 0.0 {
                1.0
            } else {
                ((t - prev.t_ms) / span).clamp(0.0, 1.0)
            }
        };
        loop {
            let t = self.next_pose as f64 * POSE_PERIOD_MS;
            if t > now.t_ms {
                break;
            }
            let a = lerp(t);
            let pose = PlanarPose::new(
                prev.pose.x + a * (now.pose.x - prev.pose.x),
                prev.pose.z + a * (now.pose.z - prev.pose.z),
                prev.pose.theta + a * (now.pose.theta - prev.pose.theta),
            );
            self.latest_pose = PoseRecord { t, v: pose.to_pose7() };
            if self.active {
                self.poses.push(self.latest_pose);
            }
            self.next_pose += 1;
        }
        loop {
            let t = self.next_wrench as f64 * WRENCH_PERIOD_MS;
            if t > now.t_ms {
                break;
            }
            let a = lerp(t);
            let mut v = [0.0; 6];
            for (i, x) in v.iter_mut().enumerate() {
                *x = prev.wrench[i] + a * (now.wrench[i] - prev.wrench[i]);
            }
            self.latest_wrench = WrenchRecord { t, v };
            if self.active {
                self.wrenches.push(self.latest_wrench);
            }
            self.next_wrench += 1;
        }
    }

    pub fn finish(self, meta: EpisodeMeta) -> Result<EpisodeRecord, RecordError> {
        if self.poses.is_empty() && self.wrenches.is_empty() {
            return Err(RecordError::Empty);
        }
        Ok(EpisodeRecord { meta, pose_stream: self.poses, wrench_stream: self.wrenches })
    }
}
