//! Quaternion and rigid-transform algebra.
//!
//! Quaternions are scalar-first Hamilton quaternions `(w, x, y, z)`. Unit
//! quaternions double-cover SO(3); [`Quat::canonical`] picks the `w >= 0`
//! representative. All arithmetic is `f64`.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// Tolerance used when validating externally supplied unit quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl TryFrom<[f64; 4]> for Quat {
    type Error = String;

    /// Accepts the stored components verbatim so that files round-trip
    /// bit-for-bit; only the unit-norm check is applied.
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        let q = Quat::from_raw(v[0], v[1], v[2], v[3]);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(format!("quaternion {v:?} is not unit norm (|q| = {n})"));
        }
        Ok(q)
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizing constructor.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::from_raw(w, x, y, z).normalized()
    }

    /// Stores components as given, without normalization.
    pub const fn from_raw(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let k = s / n;
        Self::new(c, axis[0] * k, axis[1] * k, axis[2] * k)
    }

    /// Rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = norm(v);
        if angle < 1e-12 {
            // second-order accurate near the origin
            return Self::new(1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]);
        }
        Self::from_axis_angle(v, angle)
    }

    /// Rotation about +x.
    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        Self::from_raw(c, s, 0.0, 0.0)
    }

    /// Rotation about +y (pitch in the x–z plane).
    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        Self::from_raw(c, 0.0, s, 0.0)
    }

    /// Rotation about +z (yaw).
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        Self::from_raw(c, 0.0, 0.0, s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Self::from_raw(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    /// Representative of the double cover with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            Self::from_raw(-self.w, -self.x, -self.y, -self.z)
        } else {
            *self
        }
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn vec(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Norm of the imaginary part, `sin(angle / 2)` for a unit quaternion.
    pub fn im_norm(&self) -> f64 {
        norm(self.vec())
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.im_norm().atan2(self.w.abs())
    }

    /// Geodesic angle between two orientations, in `[0, π]`.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        (self.conj() * *other).angle()
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u × v) + 2 u × (u × v)
        let u = self.vec();
        let t = scale(cross(u, v), 2.0);
        add(add(v, scale(t, self.w)), cross(u, t))
    }

    pub fn inverse_rotate(&self, v: Vec3) -> Vec3 {
        self.conj().rotate(v)
    }

    /// Column-major rotation matrix as rows `[r0, r1, r2]`.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Rotation vector of the canonical quaternion; magnitude in `[0, π]`.
    pub fn to_axis_angle(&self) -> AxisAngle {
        let q = self.canonical();
        let s = q.im_norm();
        if s < 1e-12 {
            return AxisAngle { v: scale(q.vec(), 2.0) };
        }
        let angle = 2.0 * s.atan2(q.w);
        AxisAngle { v: scale(q.vec(), angle / s) }
    }

    /// Shortest-arc spherical interpolation.
    pub fn slerp(&self, other: &Quat, t: f64) -> Quat {
        let mut b = *other;
        let mut d = self.dot(&b);
        if d < 0.0 {
            b = Quat::from_raw(-b.w, -b.x, -b.y, -b.z);
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return Quat::new(
                self.w + t * (b.w - self.w),
                self.x + t * (b.x - self.x),
                self.y + t * (b.y - self.y),
                self.z + t * (b.z - self.z),
            );
        }
        let theta = d.min(1.0).acos();
        let s = theta.sin();
        let ka = ((1.0 - t) * theta).sin() / s;
        let kb = (t * theta).sin() / s;
        Quat::new(
            ka * self.w + kb * b.w,
            ka * self.x + kb * b.x,
            ka * self.y + kb * b.y,
            ka * self.z + kb * b.z,
        )
    }

    /// Pitch of the body x-axis projected onto the world x–z plane.
    pub fn planar_pitch(&self) -> f64 {
        let fwd = self.rotate([1.0, 0.0, 0.0]);
        (-fwd[2]).atan2(fwd[0])
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat::from_raw(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    a * b
}

pub fn quat_conj(q: Quat) -> Quat {
    q.conj()
}

pub fn rotate_vec(q: Quat, v: Vec3) -> Vec3 {
    q.rotate(v)
}

pub fn quat_im_norm(q: Quat) -> f64 {
    q.im_norm()
}

/// Axis scaled by angle, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisAngle {
    pub v: Vec3,
}

impl AxisAngle {
    pub fn angle(&self) -> f64 {
        norm(self.v)
    }

    pub fn to_quat(&self) -> Quat {
        Quat::from_rotation_vector(self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub p: Vec3,
    pub q: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { p: [0.0; 3], q: Quat::IDENTITY };

    pub fn new(p: Vec3, q: Quat) -> Self {
        Pose { p, q }
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame, mapped to the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            p: add(self.p, self.q.rotate(other.p)),
            q: (self.q * other.q).normalized(),
        }
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.conj();
        Pose { p: scale(qi.rotate(self.p), -1.0), q: qi }
    }

    pub fn transform_point(&self, v: Vec3) -> Vec3 {
        add(self.p, self.q.rotate(v))
    }
}

/// `target` re-expressed in the frame of `base`.
pub fn relative_pose(base: &Pose, target: &Pose) -> Pose {
    let qi = base.q.conj();
    Pose {
        p: qi.rotate(sub(target.p, base.p)),
        q: (qi * target.q).normalized().canonical(),
    }
}

/// Heading-only correction aligning a replayed reference heading with the
/// robot's current heading.
///
/// `q_correct = q_robot · conj(q_ref)`; its yaw is extracted with the
/// two-argument arctangent and returned as a pure z rotation. At exactly ±90°
/// pitch of `q_correct` the yaw is ill-conditioned and atan2 decides.
pub fn yaw_correction(q_ref: Quat, q_robot: Quat) -> Quat {
    let c = q_robot.canonical() * q_ref.canonical().conj();
    let gamma = (2.0 * (c.w * c.z + c.x * c.y)).atan2(1.0 - 2.0 * (c.y * c.y + c.z * c.z));
    let (s, co) = (gamma * 0.5).sin_cos();
    Quat::from_raw(co, 0.0, 0.0, s)
}

/// World gravity direction `(0, 0, -1)` expressed in the body frame.
pub fn projected_gravity(q: Quat) -> Vec3 {
    q.inverse_rotate([0.0, 0.0, -1.0])
}
