//! Planar (x, z, θ about y) tenon-into-mortise simulator.
//!
//! The tenon is held by a stiff PD pose tracker (a position-controlled arm
//! with some compliance at the wrist) and touches the mortise through penalty
//! springs. The tool point is the center of the tenon tip; poses, commands and
//! the measured wrench all refer to it.

mod contact;

use libm::{cos, fabs, sin, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::{contact_wrench, mortise_polygons, tenon_polygon, ContactLaw, ContactPoint, ContactWrench};

use crate::rotation::Quat;

/// Tenon tilt at the start of every episode (6°).
pub const START_TILT_RAD: f64 = 6.0 * core::f64::consts::PI / 180.0;
/// Height of the tenon tip above the mortise face at the start, mm.
pub const START_HEIGHT_MM: f64 = 15.0;
/// Fraction of the mortise depth that counts as fully inserted.
pub const SUCCESS_DEPTH_FRACTION: f64 = 0.95;
/// Largest residual tilt accepted at success, radians (1°).
pub const SUCCESS_TILT_RAD: f64 = core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    Config(&'static str),
    #[error("mortise offset {offset} mm exceeds the face half-width {limit} mm")]
    OffsetOutOfRange { offset: f64, limit: f64 },
    #[error("non-finite pose command")]
    NonFiniteCommand,
    #[error("non-positive step duration")]
    BadStep,
}

/// Dimensions of the joint, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointGeometry {
    pub tenon_width: f64,
    /// Length along the insertion direction.
    pub tenon_length: f64,
    pub mortise_slot_width: f64,
    pub mortise_depth: f64,
    /// Extent of the mortise face on either side of the slot center.
    pub mortise_face_halfwidth: f64,
    /// 45° chamfer on the slot entry edges.
    pub edge_chamfer: f64,
}

impl Default for JointGeometry {
    fn default() -> Self {
        Self {
            tenon_width: 30.0,
            tenon_length: 60.0,
            mortise_slot_width: 30.1,
            mortise_depth: 40.0,
            mortise_face_halfwidth: 80.0,
            edge_chamfer: 1.5,
        }
    }
}

impl JointGeometry {
    pub fn clearance(&self) -> f64 {
        self.mortise_slot_width - self.tenon_width
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.tenon_width,
            self.tenon_length,
            self.mortise_slot_width,
            self.mortise_depth,
            self.mortise_face_halfwidth,
            self.edge_chamfer,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SimError::Config("all joint dimensions must be positive"));
        }
        if self.clearance() <= 0.0 {
            return Err(SimError::Config("slot must be wider than the tenon"));
        }
        if self.mortise_depth >= self.tenon_length {
            return Err(SimError::Config("tenon must be longer than the mortise depth"));
        }
        if self.mortise_slot_width / 2.0 + self.edge_chamfer >= self.mortise_face_halfwidth {
            return Err(SimError::Config("mortise face too narrow for the slot"));
        }
        Ok(())
    }

    pub fn success_depth(&self) -> f64 {
        SUCCESS_DEPTH_FRACTION * self.mortise_depth
    }
}

/// Physical and timing constants. Lengths in mm, forces in N, time in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub geometry: JointGeometry,
    /// N/mm
    pub contact_stiffness: f64,
    /// N·s/mm
    pub contact_damping: f64,
    pub friction_mu: f64,
    /// mm/s
    pub friction_smoothing_vel: f64,
    /// Translational PD gains of the gripper, N/mm and N·s/mm.
    pub track_stiffness: f64,
    pub track_damping: f64,
    /// Rotational PD gains, N·mm/rad and N·mm·s/rad.
    pub track_rot_stiffness: f64,
    pub track_rot_damping: f64,
    /// kg
    pub tenon_mass: f64,
    /// N
    pub protective_stop_force: f64,
    pub substep_dt: f64,
    /// Hz
    pub command_rate: f64,
    /// Force noise std, N. Torque noise uses the same std over a 10 mm arm.
    pub wrench_noise_std: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let geometry = JointGeometry::default();
        let tenon_mass = 2.0;
        let track_stiffness = 10.0;
        let track_rot_stiffness = 5.0e4;
        let mut c = Self {
            geometry,
            contact_stiffness: 100.0,
            contact_damping: 1.0,
            friction_mu: 0.4,
            friction_smoothing_vel: 1.0,
            track_stiffness,
            track_damping: 0.0,
            track_rot_stiffness,
            track_rot_damping: 0.0,
            tenon_mass,
            protective_stop_force: 150.0,
            substep_dt: 5e-4,
            command_rate: 60.0,
            wrench_noise_std: 0.5,
            seed: 0,
        };
        c.track_damping = 2.0 * sqrt(track_stiffness * c.mass());
        c.track_rot_damping = 2.0 * sqrt(track_rot_stiffness * c.inertia());
        c
    }
}

impl SimConfig {
    /// Mass in N·s²/mm.
    pub fn mass(&self) -> f64 {
        self.tenon_mass * 1e-3
    }

    /// Moment of inertia about the tool point (tip center), N·mm·s².
    pub fn inertia(&self) -> f64 {
        let g = &self.geometry;
        self.mass() * (g.tenon_width * g.tenon_width / 12.0 + g.tenon_length * g.tenon_length / 3.0)
    }

    pub fn command_period(&self) -> f64 {
        1.0 / self.command_rate
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        let positive = [
            self.contact_stiffness,
            self.contact_damping,
            self.friction_mu,
            self.friction_smoothing_vel,
            self.track_stiffness,
            self.track_damping,
            self.track_rot_stiffness,
            self.track_rot_damping,
            self.tenon_mass,
            self.protective_stop_force,
            self.substep_dt,
            self.command_rate,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SimError::Config("physical constants must be positive"));
        }
        if !(self.wrench_noise_std >= 0.0) {
            return Err(SimError::Config("wrench noise must be non-negative"));
        }
        if self.substep_dt > self.command_period() {
            return Err(SimError::Config("substep longer than the command period"));
        }
        Ok(())
    }
}

/// Tool-point pose: tip center position (mm) and rotation about y (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub const fn new(x: f64, z: f64, theta: f64) -> Self {
        Self { x, z, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }

    pub fn body_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = (sin(self.theta), cos(self.theta));
        [self.x + c * p[0] + s * p[1], self.z - s * p[0] + c * p[1]]
    }

    pub fn quat(&self) -> Quat {
        Quat::about_y(self.theta)
    }

    /// `[x, y, z, qw, qx, qy, qz]` with y = 0.
    pub fn to_pose7(&self) -> [f64; 7] {
        let q = self.quat();
        [self.x, 0.0, self.z, q.w, q.x, q.y, q.z]
    }

    pub fn from_pose7(v: &[f64; 7]) -> Self {
        let q = Quat::new(v[3], v[4], v[5], v[6]);
        Self::new(v[0], v[2], q.y_angle())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarVelocity {
    pub vx: f64,
    pub vz: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Success,
    ProtectiveStop,
    Timeout,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }
}

/// One F/T sample in the tool frame: time in ms, force in N, torque in N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchSample {
    pub t: f64,
    pub force: [f64; 3],
    pub torque: [f64; 3],
}

impl WrenchSample {
    pub fn to_array(&self) -> [f64; 6] {
        [self.force[0], self.force[1], self.force[2], self.torque[0], self.torque[1], self.torque[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub tenon_pose: PlanarPose,
    pub tenon_velocity: PlanarVelocity,
    pub commanded_pose: PlanarPose,
    /// Signed x displacement of the slot center, mm.
    pub mortise_offset: f64,
    /// Simulated time, s.
    pub clock: f64,
    pub status: Status,
}

/// What the simulator reports after each integration substep.
#[derive(Debug, Clone, Copy)]
pub struct Substep {
    pub clock: f64,
    pub pose: PlanarPose,
    /// Noisy tool-frame wrench `[fx, fy, fz, tx, ty, tz]`.
    pub wrench: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub wrench: WrenchSample,
    pub status: Status,
}

pub fn start_pose() -> PlanarPose {
    PlanarPose::new(0.0, START_HEIGHT_MM, START_TILT_RAD)
}

/// Depth of the tenon tip below the mortise face (negative above it).
pub fn insertion_depth(state: &SimState) -> f64 {
    -state.tenon_pose.z
}

/// Terminal classification. Terminal states are absorbing.
pub fn check_termination(state: &SimState, geometry: &JointGeometry, time_budget: f64) -> Status {
    if state.status.is_terminal() {
        return state.status;
    }
    if insertion_depth(state) >= geometry.success_depth() && fabs(state.tenon_pose.theta) < SUCCESS_TILT_RAD {
        return Status::Success;
    }
    if state.clock > time_budget {
        return Status::Timeout;
    }
    Status::Running
}

/// Planar reduction of the polar offset sampler: magnitude uniform on
/// `[0, r_max]`, random sign.
pub fn sample_mortise_offset<R: Rng + ?Sized>(rng: &mut R, r_max: f64) -> f64 {
    if r_max <= 0.0 {
        return 0.0;
    }
    let r = rng.random_range(0.0..=r_max);
    if rng.random_bool(0.5) {
        r
    } else {
        -r
    }
}

#[derive(Debug, Clone)]
pub struct Sim {
    config: SimConfig,
    law: ContactLaw,
    state: SimState,
    noise: ChaCha8Rng,
    last_contact: ContactWrench,
}

impl Sim {
    /// Fresh simulator with the tenon at the start pose.
    pub fn new(config: SimConfig, mortise_offset: f64, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let limit = config.geometry.mortise_face_halfwidth;
        if !mortise_offset.is_finite() || fabs(mortise_offset) > limit {
            return Err(SimError::OffsetOutOfRange { offset: mortise_offset, limit });
        }
        let pose = start_pose();
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(0x5e_75_0a);
        Ok(Self {
            law: ContactLaw::from(&config),
            config,
            state: SimState {
                tenon_pose: pose,
                tenon_velocity: PlanarVelocity::default(),
                commanded_pose: pose,
                mortise_offset,
                clock: 0.0,
                status: Status::Running,
            },
            noise,
            last_contact: ContactWrench::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn insertion_depth(&self) -> f64 {
        insertion_depth(&self.state)
    }

    /// Contacts from the most recent substep.
    pub fn last_contact(&self) -> &ContactWrench {
        &self.last_contact
    }

    /// Applies the time budget; used by episode drivers.
    pub fn enforce_budget(&mut self, time_budget: f64) -> Status {
        self.state.status = check_termination(&self.state, &self.config.geometry, time_budget);
        self.state.status
    }

    pub fn step(&mut self, command: PlanarPose, dt: f64) -> Result<StepOutput, SimError> {
        self.step_observed(command, dt, &mut |_| {})
    }

    /// Advances by `dt` seconds while the gripper tracks `command`, calling
    /// `observer` after every substep.
    pub fn step_observed(
        &mut self,
        command: PlanarPose,
        dt: f64,
        observer: &mut dyn FnMut(&Substep),
    ) -> Result<StepOutput, SimError> {
        if !command.is_finite() {
            return Err(SimError::NonFiniteCommand);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::BadStep);
        }
        if self.state.status.is_terminal() {
            return Ok(StepOutput {
                wrench: WrenchSample { t: self.state.clock * 1e3, ..WrenchSample::default() },
                status: self.state.status,
            });
        }
        self.state.commanded_pose = command;
        let n = libm::ceil(dt / self.config.substep_dt - 1e-9).max(1.0) as usize;
        let h = dt / n as f64;
        let mut wrench = [0.0; 6];
        for _ in 0..n {
            wrench = self.substep(h);
            observer(&Substep { clock: self.state.clock, pose: self.state.tenon_pose, wrench });
            if self.state.status.is_terminal() {
                break;
            }
        }
        Ok(StepOutput {
            wrench: WrenchSample {
                t: self.state.clock * 1e3,
                force: [wrench[0], wrench[1], wrench[2]],
                torque: [wrench[3], wrench[4], wrench[5]],
            },
            status: self.state.status,
        })
    }

    /// Keeps integrating for `duration` seconds with the last command held,
    /// as when the operator pauses before ending a recording. The status is
    /// left as it was.
    pub fn hold(&mut self, duration: f64, observer: &mut dyn FnMut(&Substep)) {
        let status = self.state.status;
        let n = libm::ceil(duration / self.config.substep_dt - 1e-9).max(0.0) as usize;
        for _ in 0..n {
            let wrench = self.substep(self.config.substep_dt);
            observer(&Substep { clock: self.state.clock, pose: self.state.tenon_pose, wrench });
        }
        self.state.status = status;
    }

    fn substep(&mut self, h: f64) -> [f64; 6] {
        let c = &self.config;
        let s = &mut self.state;
        let contact = contact_wrench(&c.geometry, &self.law, s.mortise_offset, &s.tenon_pose, &s.tenon_velocity);
        let (p, v, cmd) = (s.tenon_pose, s.tenon_velocity, s.commanded_pose);

        let fx = c.track_stiffness * (cmd.x - p.x) - c.track_damping * v.vx + contact.force[0];
        let fz = c.track_stiffness * (cmd.z - p.z) - c.track_damping * v.vz + contact.force[1];
        let tq = c.track_rot_stiffness * (cmd.theta - p.theta) - c.track_rot_damping * v.omega + contact.torque;

        let (m, inertia) = (c.mass(), c.inertia());
        s.tenon_velocity.vx += h * fx / m;
        s.tenon_velocity.vz += h * fz / m;
        s.tenon_velocity.omega += h * tq / inertia;
        s.tenon_pose.x += h * s.tenon_velocity.vx;
        s.tenon_pose.z += h * s.tenon_velocity.vz;
        s.tenon_pose.theta += h * s.tenon_velocity.omega;
        s.clock += h;

        let magnitude = sqrt(contact.force[0] * contact.force[0] + contact.force[1] * contact.force[1]);
        if magnitude > c.protective_stop_force {
            s.status = Status::ProtectiveStop;
        } else {
            s.status = check_termination(s, &c.geometry, f64::INFINITY);
        }

        // Sensor reading: contact load on the tenon, rotated into the tool frame.
        let (sn, cs) = (sin(p.theta), cos(p.theta));
        let f_bx = cs * contact.force[0] - sn * contact.force[1];
        let f_bz = sn * contact.force[0] + cs * contact.force[1];
        let sigma = c.wrench_noise_std;
        let tsigma = sigma * 1e-2;
        let mut n = || -> f64 { self.noise.sample::<f64, _>(StandardNormal) };
        let wrench = [
            f_bx + sigma * n(),
            sigma * n(),
            f_bz + sigma * n(),
            tsigma * n(),
            contact.torque * 1e-3 + tsigma * n(),
            tsigma * n(),
        ];
        self.last_contact = contact;
        wrench
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn sim(offset: f64) -> Sim {
        Sim::new(SimConfig::default(), offset, 0).unwrap()
    }

    #[test]
    fn starts_above_the_slot_with_tilt() {
        let s = sim(0.0);
        let st = s.state();
        assert_eq!(st.tenon_pose.x, 0.0);
        assert_eq!(st.tenon_pose.z, 15.0);
        assert!((st.tenon_pose.theta - 0.1047).abs() < 1e-4);
        assert_eq!(st.status, Status::Running);
        assert_eq!(insertion_depth(st), -15.0);
    }

    #[test]
    fn offset_displaces_slot_only() {
        let s = sim(10.0);
        assert_eq!(s.state().mortise_offset - s.state().tenon_pose.x, 10.0);
    }

    #[test]
    fn offset_outside_face_is_rejected() {
        let err = Sim::new(SimConfig::default(), 200.0, 0).unwrap_err();
        assert!(matches!(err, SimError::OffsetOutOfRange { .. }));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = SimConfig { substep_dt: 0.1, ..SimConfig::default() };
        assert!(Sim::new(c, 0.0, 0).is_err());
        let mut c = SimConfig::default();
        c.geometry.mortise_slot_width = 29.0;
        assert!(Sim::new(c, 0.0, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut a = sim(3.0);
        let mut b = sim(3.0);
        let cmd = PlanarPose::new(1.0, 5.0, 0.0);
        for _ in 0..30 {
            let oa = a.step(cmd, 1.0 / 60.0).unwrap();
            let ob = b.step(cmd, 1.0 / 60.0).unwrap();
            assert_eq!(oa, ob);
        }
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn holding_still_in_free_space_is_stationary() {
        let mut s = sim(0.0);
        let start = s.state().tenon_pose;
        let mut wrenches = Vec::new();
        for _ in 0..120 {
            let out = s.step(start, 1.0 / 60.0).unwrap();
            wrenches.push(out.wrench);
        }
        assert_eq!(s.state().tenon_pose, start);
        assert_eq!(s.state().tenon_velocity, PlanarVelocity::default());
        let sigma = SimConfig::default().wrench_noise_std;
        for w in wrenches {
            for f in w.force {
                assert!(f.abs() < 5.0 * sigma);
            }
        }
    }

    #[test]
    fn non_finite_command_leaves_state_untouched() {
        let mut s = sim(0.0);
        let before = *s.state();
        let err = s.step(PlanarPose::new(f64::NAN, 0.0, 0.0), 1.0 / 60.0).unwrap_err();
        assert_eq!(err, SimError::NonFiniteCommand);
        assert_eq!(*s.state(), before);
    }

    #[test]
    fn pushing_into_the_face_trips_protective_stop() {
        // tenon entirely over the face, then commanded deep into it.
        let mut s = sim(60.0);
        let mut status = Status::Running;
        for i in 0..600 {
            let z = 15.0 - 0.5 * i as f64;
            status = s.step(PlanarPose::new(0.0, z.max(-40.0), 0.0), 1.0 / 60.0).unwrap().status;
            if status.is_terminal() {
                break;
            }
        }
        assert_eq!(status, Status::ProtectiveStop);
        // closed-form spring equilibrium: the tracker must have been commanded
        // at least stop_force / k_series below the face
        let c = SimConfig::default();
        let k_series = 1.0 / (1.0 / c.track_stiffness + 1.0 / (2.0 * c.contact_stiffness));
        assert!(-s.state().commanded_pose.z >= c.protective_stop_force / k_series - 1.0);
    }

    #[test]
    fn terminal_states_absorb() {
        let mut s = sim(60.0);
        for i in 0..600 {
            let z = 15.0 - 0.5 * i as f64;
            if s.step(PlanarPose::new(0.0, z.max(-40.0), 0.0), 1.0 / 60.0).unwrap().status.is_terminal() {
                break;
            }
        }
        let frozen = *s.state();
        let out = s.step(PlanarPose::new(5.0, 5.0, 0.0), 1.0 / 60.0).unwrap();
        assert_eq!(out.status, Status::ProtectiveStop);
        assert_eq!(s.state().tenon_pose, frozen.tenon_pose);
    }

    #[test]
    fn straight_insertion_succeeds() {
        let mut s = sim(0.0);
        let mut status = Status::Running;
        for i in 0..1200 {
            let t = i as f64 / 60.0;
            let theta = (START_TILT_RAD * (1.0 - t)).max(0.0);
            let z = 15.0 - 15.0 * t;
            status = s.step(PlanarPose::new(0.0, z.max(-42.0), theta), 1.0 / 60.0).unwrap().status;
            if status.is_terminal() {
                break;
            }
        }
        assert_eq!(status, Status::Success);
        assert!(s.insertion_depth() >= 0.95 * 40.0);
    }

    #[test]
    fn termination_thresholds() {
        let g = JointGeometry::default();
        let mut st = *sim(0.0).state();
        st.tenon_pose = PlanarPose::new(0.0, -0.96 * g.mortise_depth, 0.2f64.to_radians());
        assert_eq!(check_termination(&st, &g, 20.0), Status::Success);
        st.tenon_pose.z = -10.0;
        st.clock = 21.0;
        assert_eq!(check_termination(&st, &g, 20.0), Status::Timeout);
        st.status = Status::ProtectiveStop;
        st.tenon_pose.z = -39.0;
        assert_eq!(check_termination(&st, &g, 20.0), Status::ProtectiveStop);
        st.status = Status::Running;
        st.clock = 0.0;
        st.tenon_pose.z = 0.0;
        assert_eq!(insertion_depth(&st), 0.0);
    }

    #[test]
    fn offset_sampler_magnitude_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let near = (0..n).filter(|_| sample_mortise_offset(&mut rng, 10.0).abs() <= 5.0).count();
        let p = near as f64 / n as f64;
        assert!((p - 0.5).abs() <= 0.02, "P(|offset|<=5) = {p}");
        assert_eq!(sample_mortise_offset(&mut rng, 0.0), 0.0);
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sample_mortise_offset(&mut a, 10.0), sample_mortise_offset(&mut b, 10.0));
        }
    }
}
