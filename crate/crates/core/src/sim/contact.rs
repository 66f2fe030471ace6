//! Penalty contact between the tenon rectangle and the mortise block.
//!
//! The mortise is the union of three convex polygons (two chamfered cheek
//! blocks and the floor). Contacts are found vertex-against-polygon in both
//! directions: tenon corners inside a mortise polygon, and mortise corners
//! (chamfer and floor corners) inside the tenon. Each contact contributes a
//! spring-damper normal force and a tanh-regularized Coulomb friction force.

use alloc::vec::Vec;
use libm::tanh;

use super::{JointGeometry, PlanarPose, PlanarVelocity, SimConfig};

/// Point on the tenon where a contact force acts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// World position, mm.
    pub position: [f64; 2],
    /// Unit direction the force pushes the tenon.
    pub normal: [f64; 2],
    /// Penetration depth, mm.
    pub depth: f64,
    /// Normal force magnitude, N.
    pub normal_force: f64,
    /// Signed tangential force along `tangent()`, N.
    pub tangent_force: f64,
}

impl ContactPoint {
    pub fn tangent(&self) -> [f64; 2] {
        [-self.normal[1], self.normal[0]]
    }

    pub fn force(&self) -> [f64; 2] {
        let t = self.tangent();
        [
            self.normal_force * self.normal[0] + self.tangent_force * t[0],
            self.normal_force * self.normal[1] + self.tangent_force * t[1],
        ]
    }
}

/// Net contact load on the tenon, expressed in world axes at the tool point
/// (tenon tip center). `force = (fx, fz)` in N, `torque` about +y in N·mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactWrench {
    pub force: [f64; 2],
    pub torque: f64,
    pub contacts: Vec<ContactPoint>,
}

/// Contact law constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub mu: f64,
    pub smoothing_vel: f64,
}

impl From<&SimConfig> for ContactLaw {
    fn from(c: &SimConfig) -> Self {
        Self {
            stiffness: c.contact_stiffness,
            damping: c.contact_damping,
            mu: c.friction_mu,
            smoothing_vel: c.friction_smoothing_vel,
        }
    }
}

type Polygon = Vec<[f64; 2]>;

/// Counter-clockwise convex pieces of the mortise with the slot centered at
/// `slot_x`.
pub fn mortise_polygons(g: &JointGeometry, slot_x: f64) -> [Polygon; 3] {
    let hw = g.mortise_slot_width / 2.0;
    let c = g.edge_chamfer;
    let d = g.mortise_depth;
    let w = g.mortise_face_halfwidth;
    let base = d + 20.0;
    let left = alloc::vec![
        [slot_x - w, -base],
        [slot_x - hw, -base],
        [slot_x - hw, -c],
        [slot_x - hw - c, 0.0],
        [slot_x - w, 0.0],
    ];
    let right = alloc::vec![
        [slot_x + hw, -base],
        [slot_x + w, -base],
        [slot_x + w, 0.0],
        [slot_x + hw + c, 0.0],
        [slot_x + hw, -c],
    ];
    let floor = alloc::vec![
        [slot_x - hw, -base],
        [slot_x + hw, -base],
        [slot_x + hw, -d],
        [slot_x - hw, -d],
    ];
    [left, right, floor]
}

/// Mortise corners that can poke into the tenon.
fn mortise_corners(g: &JointGeometry, slot_x: f64) -> [[f64; 2]; 6] {
    let hw = g.mortise_slot_width / 2.0;
    let c = g.edge_chamfer;
    let d = g.mortise_depth;
    [
        [slot_x - hw - c, 0.0],
        [slot_x - hw, -c],
        [slot_x + hw + c, 0.0],
        [slot_x + hw, -c],
        [slot_x - hw, -d],
        [slot_x + hw, -d],
    ]
}

/// Tenon outline in world coordinates, counter-clockwise starting at the
/// bottom-left corner of the tip.
pub fn tenon_polygon(g: &JointGeometry, pose: &PlanarPose) -> [[f64; 2]; 4] {
    let hw = g.tenon_width / 2.0;
    let l = g.tenon_length;
    [
        pose.body_to_world([-hw, 0.0]),
        pose.body_to_world([hw, 0.0]),
        pose.body_to_world([hw, l]),
        pose.body_to_world([-hw, l]),
    ]
}

/// Deepest-edge penetration of `p` into a counter-clockwise convex polygon:
/// `(depth, outward normal of that edge)` when `p` is strictly inside.
fn penetration(poly: &[[f64; 2]], p: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let n = poly.len();
    let mut best_s = f64::NEG_INFINITY;
    let mut best_n = [0.0, 0.0];
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let len = libm::sqrt(dx * dx + dz * dz);
        let normal = [dz / len, -dx / len];
        let s = normal[0] * (p[0] - a[0]) + normal[1] * (p[1] - a[1]);
        if s >= 0.0 {
            return None;
        }
        if s > best_s {
            best_s = s;
            best_n = normal;
        }
    }
    Some((-best_s, best_n))
}

fn point_velocity(pose: &PlanarPose, vel: &PlanarVelocity, p: [f64; 2]) -> [f64; 2] {
    // ω about +y: ω × r = (ω r_z, −ω r_x)
    let rx = p[0] - pose.x;
    let rz = p[1] - pose.z;
    [vel.vx + vel.omega * rz, vel.vz - vel.omega * rx]
}

fn resolve(law: &ContactLaw, position: [f64; 2], normal: [f64; 2], depth: f64, v: [f64; 2]) -> ContactPoint {
    let rate = -(v[0] * normal[0] + v[1] * normal[1]);
    let normal_force = (law.stiffness * depth + law.damping * rate).max(0.0);
    let tangent = [-normal[1], normal[0]];
    let vt = v[0] * tangent[0] + v[1] * tangent[1];
    let tangent_force = -law.mu * normal_force * tanh(vt / law.smoothing_vel);
    ContactPoint { position, normal, depth, normal_force, tangent_force }
}

/// Net penalty wrench on the tenon at `pose` moving with `vel` against a
/// mortise whose slot is centered at `slot_x`.
pub fn contact_wrench(
    geometry: &JointGeometry,
    law: &ContactLaw,
    slot_x: f64,
    pose: &PlanarPose,
    vel: &PlanarVelocity,
) -> ContactWrench {
    let mut contacts = Vec::new();
    let pieces = mortise_polygons(geometry, slot_x);
    let tenon = tenon_polygon(geometry, pose);

    for &corner in tenon.iter() {
        for piece in pieces.iter() {
            if let Some((depth, normal)) = penetration(piece, corner) {
                let v = point_velocity(pose, vel, corner);
                contacts.push(resolve(law, corner, normal, depth, v));
            }
        }
    }
    for corner in mortise_corners(geometry, slot_x) {
        if let Some((depth, edge_normal)) = penetration(&tenon, corner) {
            let v = point_velocity(pose, vel, corner);
            let normal = [-edge_normal[0], -edge_normal[1]];
            contacts.push(resolve(law, corner, normal, depth, v));
        }
    }

    let mut force = [0.0, 0.0];
    let mut torque = 0.0;
    for c in &contacts {
        let f = c.force();
        force[0] += f[0];
        force[1] += f[1];
        let rx = c.position[0] - pose.x;
        let rz = c.position[1] - pose.z;
        torque += rz * f[0] - rx * f[1];
    }
    ContactWrench { force, torque, contacts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> ContactLaw {
        ContactLaw { stiffness: 100.0, damping: 1.0, mu: 0.4, smoothing_vel: 1.0 }
    }

    fn still() -> PlanarVelocity {
        PlanarVelocity::default()
    }

    #[test]
    fn separated_bodies_have_no_contacts() {
        let g = JointGeometry::default();
        let w = contact_wrench(&g, &law(), 0.0, &PlanarPose::new(0.0, 15.0, 0.1047), &still());
        assert!(w.contacts.is_empty());
        assert_eq!(w.force, [0.0, 0.0]);
        assert_eq!(w.torque, 0.0);
    }

    #[test]
    fn single_corner_follows_linear_penalty_law() {
        let g = JointGeometry::default();
        // tip over the left face, tilted so only the right corner dips
        // 0.05 mm below the face
        let hw = g.tenon_width / 2.0;
        let theta = 0.01;
        let pose = PlanarPose::new(-40.0, hw * libm::sin(theta) - 0.05, theta);
        let w = contact_wrench(&g, &law(), 0.0, &pose, &still());
        assert_eq!(w.contacts.len(), 1);
        assert!((w.contacts[0].depth - 0.05).abs() < 1e-9);
        assert!((w.contacts[0].normal_force - 5.0).abs() < 1e-7);
    }

    #[test]
    fn penetration_doubles_force() {
        let g = JointGeometry::default();
        let f = |d: f64| {
            let pose = PlanarPose::new(-40.0, -d, 0.0);
            contact_wrench(&g, &law(), 0.0, &pose, &still()).force[1]
        };
        let (a, b) = (f(0.05), f(0.1));
        assert!(a > 0.0);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn symmetric_cheek_jam_cancels() {
        let g = JointGeometry { mortise_slot_width: 29.8, ..JointGeometry::default() };
        let pose = PlanarPose::new(0.0, -10.0, 0.0);
        let w = contact_wrench(&g, &law(), 0.0, &pose, &still());
        assert!(!w.contacts.is_empty());
        assert!(w.force[0].abs() < 1e-9);
        assert!(w.torque.abs() < 1e-9);
    }

    #[test]
    fn friction_opposes_sliding_and_is_bounded() {
        let g = JointGeometry::default();
        let pose = PlanarPose::new(-40.0, -0.1, 0.0);
        let vel = PlanarVelocity { vx: 5.0, vz: 0.0, omega: 0.0 };
        let w = contact_wrench(&g, &law(), 0.0, &pose, &vel);
        assert!(w.force[0] < 0.0);
        for c in &w.contacts {
            assert!(c.tangent_force.abs() <= 0.4 * c.normal_force + 1e-9);
        }
    }

    #[test]
    fn cheek_wall_pushes_tenon_back_into_slot() {
        let g = JointGeometry::default();
        // tenon shifted right inside the slot: right side 0.1 mm into the wall
        let shift = g.mortise_slot_width / 2.0 - g.tenon_width / 2.0 + 0.1;
        let pose = PlanarPose::new(shift, -10.0, 0.0);
        let w = contact_wrench(&g, &law(), 0.0, &pose, &still());
        assert!(w.force[0] < 0.0);
        // corner in the wall and the chamfer corner on the tenon side
        assert_eq!(w.contacts.len(), 2);
        for c in &w.contacts {
            assert!((c.normal_force - 10.0).abs() < 1e-6);
        }
    }
}
