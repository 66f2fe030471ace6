//! Receding-horizon execution of a policy in the simulator.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use libm::fabs;
use serde::{Deserialize, Serialize};

use super::pool::pool_actions;
use super::EvalError;
use crate::data::pose7_to_pose9;
use crate::demo::StreamRecorder;
use crate::policy::{Policy, ACTION_DIM};
use crate::rotation::{rot6d_to_rotmat, y_angle_of};
use crate::seed;
use crate::sim::{PlanarPose, Sim, SimConfig, SimState, Status};

/// Rollout and experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub k_inf: usize,
    pub eta: f64,
    pub t_a: usize,
    /// Offset magnitudes, mm; each rollout picks a random sign.
    pub offsets: Vec<f64>,
    pub rollouts_per_model: usize,
    pub models_per_config: usize,
    /// Simulated seconds before a rollout counts as a timeout.
    pub time_budget: f64,
    /// Replace the measured wrench with zeros before normalization.
    pub ft_mask: bool,
    /// Seconds between consecutive predicted poses. `None` takes the
    /// spacing of the policy's training data. Commands between poses are
    /// interpolated at the simulator's command rate.
    pub action_period: Option<f64>,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            k_inf: 32,
            eta: 0.5,
            t_a: 4,
            offsets: alloc::vec![0.0, 5.0, 10.0],
            rollouts_per_model: 5,
            models_per_config: 4,
            time_budget: 20.0,
            ft_mask: false,
            action_period: None,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self, t_p: usize) -> Result<(), EvalError> {
        if self.t_a == 0 || self.t_a > t_p {
            return Err(EvalError::ExecutionSteps { t_a: self.t_a, t_p });
        }
        if self.offsets.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(EvalError::Offsets);
        }
        if !(self.time_budget > 0.0) {
            return Err(EvalError::TimeBudget(self.time_budget));
        }
        if let Some(p) = self.action_period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(EvalError::ActionPeriod(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    ProtectiveStop,
    Timeout,
}

impl TryFrom<Status> for Outcome {
    type Error = Status;
    fn try_from(s: Status) -> Result<Self, Status> {
        match s {
            Status::Success => Ok(Self::Success),
            Status::ProtectiveStop => Ok(Self::ProtectiveStop),
            Status::Timeout => Ok(Self::Timeout),
            Status::Running => Err(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub outcome: Outcome,
    /// Signed mortise offset, mm.
    pub offset: f64,
    /// Commands sent to the robot.
    pub steps: usize,
    pub inferences: usize,
    /// Final insertion depth, mm.
    pub depth: f64,
    /// Simulated duration, s.
    pub duration: f64,
    /// Largest age of an observation at the time it was used, ms.
    pub max_obs_age_ms: f64,
}

/// Converts one denormalized action row to a planar command.
fn to_command(row: &[f64; ACTION_DIM]) -> Result<PlanarPose, EvalError> {
    let r = [row[3], row[4], row[5], row[6], row[7], row[8]];
    let m = rot6d_to_rotmat(&r).map_err(EvalError::Rotation)?;
    Ok(PlanarPose::new(row[0], row[2], y_angle_of(&m)))
}

fn lerp(a: &PlanarPose, b: &PlanarPose, s: f64) -> PlanarPose {
    PlanarPose::new(a.x + s * (b.x - a.x), a.z + s * (b.z - a.z), a.theta + s * (b.theta - a.theta))
}

/// Runs one episode: observe the latest samples, sample an action sequence,
/// execute its first `t_a` poses one action period apart, repeat until a
/// terminal status. `seed` fixes both the simulator noise and the sampler.
/// `on_command` sees every issued command with the state it was issued in.
pub fn rollout(
    sim_config: &SimConfig,
    policy: &Policy,
    cfg: &RolloutConfig,
    offset: f64,
    seed_: u64,
    on_command: &mut dyn FnMut(&SimState, &PlanarPose),
) -> Result<RolloutResult, EvalError> {
    cfg.validate(policy.config.t_p)?;
    let h = policy.config.horizons();
    let mut sim = Sim::new(*sim_config, offset, seed::derive(&[seed_, 1]))?;
    let mut rng = seed::rng(&[seed_, 2]);
    let mut rec = StreamRecorder::new(0.0, sim.state().tenon_pose, false);
    let dt = sim_config.command_period();
    let history_len = h.t_o_p.max(h.t_o_f).max(1);
    let mut history: VecDeque<([f64; 9], [f64; 6])> = VecDeque::with_capacity(history_len);
    let (mut steps, mut inferences, mut max_age) = (0usize, 0usize, 0.0f64);
    let observe = |rec: &StreamRecorder, history: &mut VecDeque<([f64; 9], [f64; 6])>, max_age: &mut f64, now_ms: f64| {
        let pose = rec.latest_pose();
        let wrench = rec.latest_wrench();
        *max_age = max_age.max(now_ms - pose.t).max(now_ms - wrench.t);
        let mut p = pose7_to_pose9(&pose.v);
        let mut w = if cfg.ft_mask { [0.0; 6] } else { wrench.v };
        policy.stats.pose.normalize(&mut p);
        policy.stats.wrench.normalize(&mut w);
        if history.is_empty() {
            history.extend(core::iter::repeat_n((p, w), history_len));
        } else {
            history.pop_front();
            history.push_back((p, w));
        }
    };
    let period = match cfg.action_period {
        Some(p) => p,
        None if policy.stats.step_period > 0.0 => policy.stats.step_period,
        None => dt,
    };
    // Ticks per executed chunk; at least one so the loop always advances.
    let ticks = (libm::round(cfg.t_a as f64 * period / dt) as usize).max(1);
    // Position of a tick in units of predicted rows, snapped so that equal
    // periods land exactly on rows.
    let row_at = |tick: usize| {
        let u = (tick as f64 * dt / period).min(cfg.t_a as f64);
        if fabs(u - libm::round(u)) < 1e-9 { libm::round(u) } else { u }
    };
    let mut last_cmd = sim.state().tenon_pose;
    // The history advances once per predicted row, matching the spacing of
    // the training windows.
    observe(&rec, &mut history, &mut max_age, 0.0);
    let status = 'outer: loop {
        let mut obs = Vec::with_capacity(h.obs_dim());
        for (p, _) in history.iter().skip(history_len - h.t_o_p) {
            obs.extend_from_slice(p);
        }
        for (_, w) in history.iter().skip(history_len - h.t_o_f) {
            obs.extend_from_slice(w);
        }

        let seq = policy.sample(&[&obs], cfg.k_inf, cfg.eta, &mut rng)?.remove(0);
        inferences += 1;
        let mut rows: Vec<[f64; ACTION_DIM]> = seq
            .chunks_exact(ACTION_DIM)
            .map(|c| {
                let mut r: [f64; ACTION_DIM] = c.try_into().expect("row of 9");
                policy.stats.action.denormalize(&mut r);
                r
            })
            .collect();
        for r in rows.iter_mut() {
            let m = rot6d_to_rotmat(&[r[3], r[4], r[5], r[6], r[7], r[8]]).map_err(EvalError::Rotation)?;
            r[3..].copy_from_slice(&crate::rotation::matrix_to_rot6d(&m));
        }
        let mut waypoints = Vec::with_capacity(cfg.t_a + 1);
        waypoints.push(last_cmd);
        for row in pool_actions(&rows, cfg.t_a).iter().take(cfg.t_a) {
            waypoints.push(to_command(row)?);
        }
        for tick in 1..=ticks {
            let u = if tick == ticks { cfg.t_a as f64 } else { row_at(tick) };
            let i = (libm::floor(u) as usize).min(cfg.t_a - 1);
            let cmd = lerp(&waypoints[i], &waypoints[i + 1], u - i as f64);
            on_command(sim.state(), &cmd);
            sim.step_observed(cmd, dt, &mut |s| rec.observe(s))?;
            steps += 1;
            let status = sim.enforce_budget(cfg.time_budget);
            if status.is_terminal() {
                break 'outer status;
            }
            let rows_done = if tick == ticks { cfg.t_a } else { libm::floor(u) as usize };
            let before = libm::floor(row_at(tick - 1)) as usize;
            for _ in before..rows_done {
                observe(&rec, &mut history, &mut max_age, sim.state().clock * 1e3);
            }
        }
        last_cmd = waypoints[cfg.t_a];
    };
    Ok(RolloutResult {
        outcome: Outcome::try_from(status).expect("terminal status"),
        offset,
        steps,
        inferences,
        depth: sim.insertion_depth(),
        duration: sim.state().clock,
        max_obs_age_ms: max_age,
    })
}
