//! Scripted demonstrator with privileged knowledge of the slot position.
//!
//! Nominal episodes straighten the tenon while approaching the slot and then
//! push in, steering laterally on the sensed side force. Recovery episodes
//! land the tenon a few millimeters off the slot, slide it along the face
//! under a light normal load until it drops over the chamfer, and then
//! insert.

use alloc::format;
use alloc::vec::Vec;
use libm::{exp, sqrt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::episode::{DemoType, EpisodeMeta, EpisodeRecord};
use super::recorder::{RecordError, StreamRecorder};
use crate::seed;
use crate::sim::{sample_mortise_offset, start_pose, PlanarPose, Sim, SimConfig, SimError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nominal,
    Recovery,
}

impl From<Variant> for DemoType {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Nominal => DemoType::Nominal,
            Variant::Recovery => DemoType::Recovery,
        }
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("expert failed {attempts} attempts at offset {offset} mm (last: {last:?})")]
    RetryBudget { attempts: u32, offset: f64, last: Status },
    #[error("recovery fraction {0} outside [0, 1]")]
    BadFraction(f64),
}

/// Tunables of the scripted expert. Ranges are sampled uniformly per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    /// s
    pub approach_time: [f64; 2],
    /// Height above the face where the nominal approach ends, mm.
    pub hover_height: [f64; 2],
    /// mm/s
    pub insert_speed: [f64; 2],
    /// Lateral correction, mm per N of sensed side force.
    pub fx_gain: f64,
    /// How far the commanded height may lead the actual height, mm.
    pub max_lead: f64,
    /// Distance from the slot center where recovery lands, mm.
    pub recovery_offset: [f64; 2],
    /// mm/s
    pub probe_speed: f64,
    /// Filtered normal force that counts as touching the face, N.
    pub contact_force: f64,
    /// Commanded depth below the contact height while sliding, mm.
    pub press_depth: f64,
    /// mm/s
    pub slide_speed: [f64; 2],
    /// Drop below the contact height that ends the slide, mm.
    pub drop_height: f64,
    /// OU command noise std (mm) and correlation time (s).
    pub noise_sigma: f64,
    pub noise_tau: f64,
    /// s
    pub time_budget: f64,
    pub max_retries: u32,
    /// Recording continues this long (s) after insertion with the last
    /// command held.
    pub dwell: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            approach_time: [1.2, 1.8],
            hover_height: [1.5, 3.0],
            insert_speed: [12.0, 18.0],
            fx_gain: 0.05,
            max_lead: 3.0,
            recovery_offset: [3.0, 8.0],
            probe_speed: 8.0,
            contact_force: 3.0,
            press_depth: 1.0,
            slide_speed: [4.0, 7.0],
            drop_height: 0.5,
            noise_sigma: 0.3,
            noise_tau: 0.2,
            time_budget: 20.0,
            max_retries: 5,
            dwell: 0.5,
        }
    }
}

/// Ornstein–Uhlenbeck process with stationary std `sigma`, exactly discretized.
#[derive(Debug, Clone)]
pub struct OuNoise {
    sigma: f64,
    tau: f64,
    state: f64,
}

impl OuNoise {
    pub fn new<R: Rng + ?Sized>(sigma: f64, tau: f64, rng: &mut R) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self { sigma, tau, state: sigma * z }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> f64 {
        let a = exp(-dt / self.tau);
        let z: f64 = rng.sample(StandardNormal);
        self.state = a * self.state + self.sigma * sqrt(1.0 - a * a) * z;
        self.state
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Approach,
    Probe { z: f64 },
    Slide { x: f64, z_contact: f64 },
    Insert { z: f64 },
}

/// Command generator for one attempt.
#[derive(Debug, Clone)]
struct Expert {
    slot_x: f64,
    start: PlanarPose,
    target: PlanarPose,
    approach_time: f64,
    insert_speed: f64,
    slide_speed: f64,
    /// +1 when the slot lies in +x from the landing point.
    slide_dir: f64,
    recovery: bool,
    phase: Phase,
    p: ExpertParams,
}

impl Expert {
    fn new(variant: Variant, slot_x: f64, p: ExpertParams, rng: &mut ChaCha8Rng) -> Self {
        let approach_time = uniform(rng, p.approach_time);
        let insert_speed = uniform(rng, p.insert_speed);
        let slide_speed = uniform(rng, p.slide_speed);
        let (target, slide_dir) = match variant {
            Variant::Nominal => (PlanarPose::new(slot_x, uniform(rng, p.hover_height), 0.0), 0.0),
            Variant::Recovery => {
                let u = uniform(rng, p.recovery_offset);
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (PlanarPose::new(slot_x - side * u, p.hover_height[1], 0.0), side)
            }
        };
        Self {
            slot_x,
            start: start_pose(),
            target,
            approach_time,
            insert_speed,
            slide_speed,
            slide_dir,
            recovery: variant == Variant::Recovery,
            phase: Phase::Approach,
            p,
        }
    }

    /// Noise-free command for time `t` given the current pose and filtered
    /// tool-frame wrench.
    fn command(&mut self, t: f64, dt: f64, pose: &PlanarPose, wrench: &[f64; 6]) -> PlanarPose {
        let p = self.p;
        let (fx, fz) = (wrench[0], wrench[2]);
        if let Phase::Approach = self.phase {
            if t < self.approach_time {
                let s = min_jerk(t / self.approach_time);
                let (a, b) = (self.start, self.target);
                return PlanarPose::new(a.x + s * (b.x - a.x), a.z + s * (b.z - a.z), a.theta + s * (b.theta - a.theta));
            }
            self.phase = if self.recovery { Phase::Probe { z: self.target.z } } else { Phase::Insert { z: self.target.z } };
        }
        match &mut self.phase {
            Phase::Approach => unreachable!(),
            Phase::Probe { z } => {
                if fz > p.contact_force {
                    let z_contact = pose.z;
                    self.phase = Phase::Slide { x: self.target.x, z_contact };
                    return PlanarPose::new(self.target.x, z_contact - p.press_depth, 0.0);
                }
                *z = (*z - p.probe_speed * dt).max(pose.z - p.max_lead);
                PlanarPose::new(self.target.x, *z, 0.0)
            }
            Phase::Slide { x, z_contact } => {
                if pose.z < *z_contact - p.drop_height {
                    let z = pose.z;
                    self.phase = Phase::Insert { z };
                    return PlanarPose::new(self.slot_x + p.fx_gain * fx, z, 0.0);
                }
                *x += self.slide_dir * self.slide_speed * dt;
                if (*x - self.slot_x) * self.slide_dir > 0.0 {
                    *x = self.slot_x;
                }
                PlanarPose::new(*x, *z_contact - p.press_depth, 0.0)
            }
            Phase::Insert { z } => {
                *z = (*z - self.insert_speed * dt).max(pose.z - p.max_lead);
                PlanarPose::new(self.slot_x + p.fx_gain * fx, *z, 0.0)
            }
        }
    }
}

/// Runs one expert attempt to termination, recording throughout.
pub fn expert_attempt(
    config: &SimConfig,
    variant: Variant,
    offset: f64,
    attempt_seed: u64,
    params: &ExpertParams,
) -> Result<(StreamRecorder, Status), SimError> {
    let mut sim = Sim::new(*config, offset, seed::derive(&[attempt_seed, 1]))?;
    let mut rng = seed::rng(&[attempt_seed, 2]);
    let mut expert = Expert::new(variant, offset, *params, &mut rng);
    let mut noise_x = OuNoise::new(params.noise_sigma, params.noise_tau, &mut rng);
    let mut noise_z = OuNoise::new(params.noise_sigma, params.noise_tau, &mut rng);
    let mut rec = StreamRecorder::new(0.0, sim.state().tenon_pose, true);
    let dt = config.command_period();
    let mut t = 0.0;
    loop {
        let pose = sim.state().tenon_pose;
        let mut cmd = expert.command(t, dt, &pose, &rec.filtered_wrench());
        cmd.x += noise_x.step(dt, &mut rng);
        cmd.z += noise_z.step(dt, &mut rng);
        sim.step_observed(cmd, dt, &mut |s| rec.observe(s))?;
        t += dt;
        let status = sim.enforce_budget(params.time_budget);
        if status == Status::Success {
            sim.hold(params.dwell, &mut |s| rec.observe(s));
        }
        if status.is_terminal() {
            return Ok((rec, status));
        }
    }
}

/// One successful scripted episode, re-rolling failed attempts on fresh
/// random substreams.
pub fn scripted_demo(
    config: &SimConfig,
    variant: Variant,
    offset: f64,
    seed: u64,
    params: &ExpertParams,
) -> Result<EpisodeRecord, DemoError> {
    let mut last = Status::Running;
    for attempt in 0..=params.max_retries {
        let (rec, status) = expert_attempt(config, variant, offset, seed::derive(&[seed, attempt as u64]), params)?;
        if status == Status::Success {
            let meta = EpisodeMeta {
                episode_id: format!("{}-{seed:016x}", variant_name(variant)),
                demo_type: variant.into(),
                mortise_offset: offset,
                seed,
                units: Default::default(),
                retries: attempt,
            };
            return Ok(rec.finish(meta)?);
        }
        last = status;
    }
    Err(DemoError::RetryBudget { attempts: params.max_retries + 1, offset, last })
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Nominal => "nominal",
        Variant::Recovery => "recovery",
    }
}

/// Which episodes of a batch are recovery demonstrations: exactly
/// `round(n * fraction)` of them, in a seeded random order.
pub fn recovery_assignment(n: usize, fraction: f64, seed: u64) -> Result<Vec<Variant>, DemoError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DemoError::BadFraction(fraction));
    }
    let k = libm::round(n as f64 * fraction) as usize;
    let mut v: Vec<Variant> = (0..n).map(|i| if i < k { Variant::Recovery } else { Variant::Nominal }).collect();
    v.shuffle(&mut seed::rng(&[seed, 0xa551]));
    Ok(v)
}

/// Parameters of a demonstration batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub n: usize,
    pub recovery_frac: f64,
    /// Largest |mortise offset|, mm.
    pub offset_max: f64,
    pub seed: u64,
}

/// Mortise offsets of a batch.
pub fn batch_offsets(spec: &BatchSpec) -> Vec<f64> {
    let mut rng = seed::rng(&[spec.seed, 0x0ff5e7]);
    (0..spec.n).map(|_| sample_mortise_offset(&mut rng, spec.offset_max)).collect()
}

/// Generates `spec.n` successful episodes; `progress` sees each one.
pub fn collect_batch(
    config: &SimConfig,
    spec: &BatchSpec,
    params: &ExpertParams,
    progress: &mut dyn FnMut(usize, &EpisodeRecord),
) -> Result<Vec<EpisodeRecord>, DemoError> {
    let variants = recovery_assignment(spec.n, spec.recovery_frac, spec.seed)?;
    let offsets = batch_offsets(spec);
    let mut out = Vec::with_capacity(spec.n);
    for (i, (variant, offset)) in variants.into_iter().zip(offsets).enumerate() {
        let mut ep = scripted_demo(config, variant, offset, seed::derive(&[spec.seed, i as u64]), params)?;
        ep.meta.episode_id = format!("ep{i:04}-{}", variant_name(variant));
        progress(i, &ep);
        out.push(ep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ou_noise_has_requested_stationary_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ou = OuNoise::new(0.3, 0.2, &mut rng);
        let n = 200_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = ou.step(1.0 / 60.0, &mut rng);
            sum2 += x * x;
        }
        let std = sqrt(sum2 / n as f64);
        assert!((std - 0.3).abs() < 0.02, "{std}");
    }

    #[test]
    fn nominal_at_zero_offset_succeeds() {
        let cfg = SimConfig::default();
        let ep = scripted_demo(&cfg, Variant::Nominal, 0.0, 11, &ExpertParams::default()).unwrap();
        assert!(ep.validate().is_empty());
        let last = ep.pose_stream.last().unwrap();
        assert!(-last.v[2] >= 0.95 * cfg.geometry.mortise_depth - 0.5);
        assert_eq!(ep.meta.demo_type, DemoType::Nominal);
    }

    #[test]
    fn recovery_touches_the_face_before_inserting() {
        let cfg = SimConfig::default();
        let params = ExpertParams::default();
        for seed in 0..4 {
            let (rec, status) = expert_attempt(&cfg, Variant::Recovery, 4.0, seed, &params).unwrap();
            assert_eq!(status, Status::Success, "seed {seed}");
            let peak = rec.wrenches().iter().map(|w| w.v[2]).fold(0.0, f64::max);
            assert!(peak > params.contact_force, "seed {seed}: peak fz {peak}");
        }
    }

    #[test]
    fn assignment_has_exact_recovery_count() {
        let v = recovery_assignment(400, 0.25, 9).unwrap();
        assert_eq!(v.iter().filter(|x| **x == Variant::Recovery).count(), 100);
        let v = recovery_assignment(10, 0.25, 9).unwrap();
        assert_eq!(v.iter().filter(|x| **x == Variant::Recovery).count(), 3);
        assert!(recovery_assignment(10, 1.5, 0).is_err());
    }

    #[test]
    fn batch_offsets_follow_the_sampler() {
        let spec = BatchSpec { n: 4000, recovery_frac: 0.25, offset_max: 10.0, seed: 5 };
        let offs = batch_offsets(&spec);
        let near = offs.iter().filter(|o| o.abs() <= 5.0).count() as f64 / offs.len() as f64;
        assert!((near - 0.5).abs() < 0.03, "{near}");
    }

    #[test]
    fn impossible_task_exhausts_retry_budget() {
        // the approach alone takes longer than the budget
        let cfg = SimConfig::default();
        let params = ExpertParams { max_retries: 1, time_budget: 0.5, ..Default::default() };
        let err = scripted_demo(&cfg, Variant::Nominal, 0.0, 1, &params).unwrap_err();
        assert!(matches!(err, DemoError::RetryBudget { attempts: 2, .. }), "{err}");
    }

    #[test]
    fn fifty_seeded_nominal_episodes_all_succeed() {
        let cfg = SimConfig::default();
        for seed in 0..50 {
            scripted_demo(&cfg, Variant::Nominal, 0.0, seed, &ExpertParams::default()).unwrap();
        }
    }
}
