//! Clutched, scaled controller-to-robot mapping.

use libm::{cos, sin};
use serde::{Deserialize, Serialize};

use crate::sim::PlanarPose;

/// One reading of the operator's controller. `pointer` is in mm in the
/// operator's frame (right, up); `rotation` is the controller's angle in
/// degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerInput {
    pub pointer: [f64; 2],
    pub rotation: f64,
    pub trigger: bool,
    /// ms
    pub t: f64,
}

impl ControllerInput {
    pub fn is_finite(&self) -> bool {
        self.pointer.iter().all(|v| v.is_finite()) && self.rotation.is_finite() && self.t.is_finite()
    }
}

/// While the trigger is held the robot follows the controller's displacement
/// since the press, scaled and rotated into the world frame. Releasing the
/// trigger freezes the robot so the controller can be repositioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopTransform {
    pub scale: f64,
    /// Planar rotation (rad) from operator axes to world (x, z).
    pub frame_alignment: f64,
    pub clutch_engaged: bool,
    pub clutch_controller_ref: ControllerInput,
    pub clutch_robot_ref: PlanarPose,
    last_command: PlanarPose,
}

impl TeleopTransform {
    pub fn new(scale: f64, frame_alignment: f64, robot: PlanarPose) -> Self {
        Self {
            scale,
            frame_alignment,
            clutch_engaged: false,
            clutch_controller_ref: ControllerInput::default(),
            clutch_robot_ref: robot,
            last_command: robot,
        }
    }

    pub fn last_command(&self) -> PlanarPose {
        self.last_command
    }

    pub fn map_controller(&mut self, input: &ControllerInput) -> PlanarPose {
        match (self.clutch_engaged, input.trigger) {
            (false, true) => {
                self.clutch_engaged = true;
                self.clutch_controller_ref = *input;
                self.clutch_robot_ref = self.last_command;
            }
            (true, false) => {
                self.clutch_engaged = false;
                self.clutch_robot_ref = self.last_command;
            }
            _ => {}
        }
        if !self.clutch_engaged {
            self.last_command = self.clutch_robot_ref;
            return self.last_command;
        }
        let d = [
            input.pointer[0] - self.clutch_controller_ref.pointer[0],
            input.pointer[1] - self.clutch_controller_ref.pointer[1],
        ];
        let (s, c) = (sin(self.frame_alignment), cos(self.frame_alignment));
        let dx = (c * d[0] - s * d[1]) * self.scale;
        let dz = (s * d[0] + c * d[1]) * self.scale;
        let dtheta = (input.rotation - self.clutch_controller_ref.rotation).to_radians() * self.scale;
        let r = self.clutch_robot_ref;
        self.last_command = PlanarPose::new(r.x + dx, r.z + dz, r.theta + dtheta);
        self.last_command
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(x: f64, z: f64, trigger: bool) -> ControllerInput {
        ControllerInput { pointer: [x, z], rotation: 0.0, trigger, t: 0.0 }
    }

    #[test]
    fn released_trigger_ignores_motion() {
        let start = PlanarPose::new(1.0, 15.0, 0.1);
        let mut tf = TeleopTransform::new(0.5, 0.0, start);
        assert_eq!(tf.map_controller(&input(0.0, 0.0, false)), start);
        assert_eq!(tf.map_controller(&input(50.0, 0.0, false)), start);
    }

    #[test]
    fn held_trigger_scales_displacement() {
        let mut tf = TeleopTransform::new(0.5, 0.0, PlanarPose::default());
        tf.map_controller(&input(0.0, 0.0, true));
        let cmd = tf.map_controller(&input(10.0, 0.0, true));
        assert_eq!(cmd.x, 5.0);
        assert_eq!(cmd.z, 0.0);
    }

    #[test]
    fn clutch_cycles_accumulate() {
        let mut tf = TeleopTransform::new(1.0, 0.0, PlanarPose::default());
        for _ in 0..2 {
            tf.map_controller(&input(0.0, 0.0, true));
            tf.map_controller(&input(10.0, 0.0, true));
            tf.map_controller(&input(10.0, 0.0, false));
            // reposition the controller while released
            tf.map_controller(&input(0.0, 0.0, false));
        }
        assert_eq!(tf.last_command().x, 20.0);
    }

    #[test]
    fn alignment_rotates_operator_axes() {
        let mut tf = TeleopTransform::new(1.0, core::f64::consts::FRAC_PI_2, PlanarPose::default());
        tf.map_controller(&input(0.0, 0.0, true));
        let cmd = tf.map_controller(&input(10.0, 0.0, true));
        assert!(cmd.x.abs() < 1e-12);
        assert!((cmd.z - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_delta_is_scaled() {
        let mut tf = TeleopTransform::new(0.5, 0.0, PlanarPose::default());
        tf.map_controller(&ControllerInput { rotation: 10.0, trigger: true, ..Default::default() });
        let cmd = tf.map_controller(&ControllerInput { rotation: 14.0, trigger: true, ..Default::default() });
        assert!((cmd.theta - 2f64.to_radians()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn released_trajectories_never_move_the_robot(path in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..40)) {
            let start = PlanarPose::new(3.0, 7.0, 0.05);
            let mut tf = TeleopTransform::new(0.7, 0.3, start);
            for (x, z) in path {
                prop_assert_eq!(tf.map_controller(&input(x, z, false)), start);
            }
        }

        #[test]
        fn held_displacement_is_exactly_scaled(dx in -50.0..50.0f64, dz in -50.0..50.0f64, scale in 0.05..2.0f64) {
            let mut tf = TeleopTransform::new(scale, 0.0, PlanarPose::default());
            tf.map_controller(&input(1.0, 2.0, true));
            let cmd = tf.map_controller(&input(1.0 + dx, 2.0 + dz, true));
            prop_assert!((cmd.x - ((1.0 + dx) - 1.0) * scale).abs() < 1e-12);
            prop_assert!((cmd.z - ((2.0 + dz) - 2.0) * scale).abs() < 1e-12);
        }
    }
}
