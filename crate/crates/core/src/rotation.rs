//! Quaternion helpers, spherical interpolation and the continuous 6D rotation
//! representation (first two columns of the rotation matrix).

use libm::{acos, atan2, cos, fabs, sin, sqrt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat3 = [[f64; 3]; 3];

/// Six numbers: the first two rotation-matrix columns, column-major
/// `[r11, r21, r31, r12, r22, r32]`.
pub type Rot6 = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RotationError {
    #[error("6D rotation columns are (nearly) parallel: cos = {cos}")]
    Degenerate { cos: f64 },
    #[error("6D rotation column has zero length")]
    ZeroColumn,
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        let (s, c) = (sin(angle / 2.0), cos(angle / 2.0));
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation by `theta` radians about the world y axis.
    pub fn about_y(theta: f64) -> Self {
        Self::new(cos(theta / 2.0), 0.0, sin(theta / 2.0), 0.0)
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Self {
        self.scale(1.0 / self.norm())
    }

    pub fn negated(self) -> Self {
        self.scale(-1.0)
    }

    pub fn to_matrix(self) -> Mat3 {
        let Quat { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Shepperd's method; the result has non-negative `w`.
    pub fn from_matrix(m: &Mat3) -> Self {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = sqrt(tr + 1.0) * 2.0;
            Self::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
            Self::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
            Self::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
            Self::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        let q = q.normalized();
        if q.w < 0.0 {
            q.negated()
        } else {
            q
        }
    }

    /// Angle of the rotation about y, assuming the rotation is planar.
    pub fn y_angle(self) -> f64 {
        y_angle_of(&self.to_matrix())
    }

    /// Geodesic distance in radians between the two orientations.
    pub fn angle_to(self, o: Quat) -> f64 {
        let d = fabs(self.dot(o)).min(1.0);
        2.0 * acos(d)
    }
}

/// Angle about y of a rotation matrix `R_y(θ)`.
pub fn y_angle_of(m: &Mat3) -> f64 {
    atan2(m[0][2], m[2][2])
}

/// Shortest-arc spherical linear interpolation. Falls back to normalized
/// lerp when the endpoints are nearly coincident.
pub fn slerp(q0: Quat, q1: Quat, t: f64) -> Quat {
    let mut q1 = q1;
    let mut d = q0.dot(q1);
    if d < 0.0 {
        q1 = q1.negated();
        d = -d;
    }
    if t == 0.0 {
        return q0;
    }
    if t == 1.0 {
        return q1;
    }
    if d > 1.0 - 1e-12 {
        let q = Quat::new(
            q0.w + t * (q1.w - q0.w),
            q0.x + t * (q1.x - q0.x),
            q0.y + t * (q1.y - q0.y),
            q0.z + t * (q1.z - q0.z),
        );
        return q.normalized();
    }
    let omega = acos(d.min(1.0));
    let so = sin(omega);
    let a = sin((1.0 - t) * omega) / so;
    let b = sin(t * omega) / so;
    Quat::new(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    )
}

pub fn matrix_to_rot6d(m: &Mat3) -> Rot6 {
    [m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]
}

pub fn quat_to_rot6d(q: Quat) -> Rot6 {
    matrix_to_rot6d(&q.to_matrix())
}

/// Gram–Schmidt reconstruction of an orthonormal, right-handed matrix from
/// two (not necessarily unit or orthogonal) columns.
pub fn rot6d_to_rotmat(r: &Rot6) -> Result<Mat3, RotationError> {
    let c1 = [r[0], r[1], r[2]];
    let c2 = [r[3], r[4], r[5]];
    let n1 = norm3(c1);
    let n2 = norm3(c2);
    if n1 < 1e-300 || n2 < 1e-300 {
        return Err(RotationError::ZeroColumn);
    }
    let cos = dot3(c1, c2) / (n1 * n2);
    if fabs(cos) > 1.0 - 1e-8 {
        return Err(RotationError::Degenerate { cos });
    }
    let a1 = scale3(c1, 1.0 / n1);
    let d = dot3(c2, a1);
    let b2 = [c2[0] - d * a1[0], c2[1] - d * a1[1], c2[2] - d * a1[2]];
    let a2 = scale3(b2, 1.0 / norm3(b2));
    let a3 = cross3(a1, a2);
    Ok([
        [a1[0], a2[0], a3[0]],
        [a1[1], a2[1], a3[1]],
        [a1[2], a2[2], a3[2]],
    ])
}

/// Re-projects a 6D rotation onto the manifold (unit, orthogonal columns).
pub fn orthonormalize_rot6d(r: &Rot6) -> Result<Rot6, RotationError> {
    rot6d_to_rotmat(r).map(|m| matrix_to_rot6d(&m))
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    sqrt(dot3(a, a))
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
