//! Rigid-body pose algebra on position + unit quaternion.
//!
//! Quaternions are stored `(w, x, y, z)`, unit norm, with a canonical sign:
//! `w > 0`, or when `w == 0` the first non-zero vector component is
//! positive. `q` and `-q` therefore have one stored representation, which
//! keeps equality and serialization deterministic.
//!
//! On the wire a pose is always the 7-tuple `[px, py, pz, qw, qx, qy, qz]`.

use core::fmt;
use core::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::math::{self, Vec3};

/// Rejected raw quaternion or pose input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InvalidPose {
    NonFinite,
    ZeroQuaternion,
}

impl fmt::Display for InvalidPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidPose::NonFinite => write!(f, "pose contains a non-finite value"),
            InvalidPose::ZeroQuaternion => write!(f, "quaternion has zero norm"),
        }
    }
}

impl core::error::Error for InvalidPose {}

/// Unit quaternion with canonical sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes and canonicalizes an arbitrary non-zero quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, InvalidPose> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(InvalidPose::NonFinite);
        }
        let n2 = w * w + x * x + y * y + z * z;
        if n2 == 0.0 || !n2.is_finite() {
            return Err(InvalidPose::ZeroQuaternion);
        }
        // Unit inputs keep their bits, so stored poses read back exactly.
        Ok(Self::renormalized(w, x, y, z))
    }

    /// Internal constructor for values that are already close to unit norm.
    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n2 = w * w + x * x + y * y + z * z;
        if (n2 - 1.0).abs() <= 1e-14 {
            return Self::canonical(w, x, y, z);
        }
        let n = math::sqrt(n2);
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        let s = if flip { -1.0 } else { 1.0 };
        // `+ 0.0` folds negative zeros so bit patterns are canonical too.
        Quat { w: s * w + 0.0, x: s * x + 0.0, y: s * y + 0.0, z: s * z + 0.0 }
    }

    /// Rotation of `angle` radians about the (not necessarily unit) `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = math::norm(axis);
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let h = 0.5 * angle;
        let s = math::sin(h) / n;
        Self::renormalized(math::cos(h), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    /// Exponential map from a rotation vector (axis times angle).
    pub fn from_rotation_vector(r: [f64; 3]) -> Self {
        let angle = math::norm(r);
        let h = 0.5 * angle;
        // sin(h)/angle, with a series near zero.
        let k = if angle < 1e-8 { 0.5 - angle * angle / 48.0 } else { math::sin(h) / angle };
        Self::renormalized(math::cos(h), r[0] * k, r[1] * k, r[2] * k)
    }

    /// Logarithm map: rotation vector with norm in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> [f64; 3] {
        let v = [self.x, self.y, self.z];
        let vn = math::norm(v);
        if vn < 1e-12 {
            // w is ~1 here because of the canonical sign.
            return math::scale(v, 2.0 / self.w);
        }
        let angle = 2.0 * math::atan2(vn, self.w);
        math::scale(v, angle / vn)
    }

    pub fn rotz(theta: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], theta)
    }

    pub fn rotx(theta: f64) -> Self {
        Self::from_axis_angle([1.0, 0.0, 0.0], theta)
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates a vector.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let u = [self.x, self.y, self.z];
        // v + 2w (u x v) + 2 u x (u x v)
        let t = math::scale(math::cross(u, v), 2.0);
        math::add(math::add(v, math::scale(t, self.w)), math::cross(u, t))
    }

    /// 4-D inner product; `|dot|` is the cosine of half the relative angle.
    pub fn dot(&self, other: &Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Geodesic angle between two orientations, in `[0, pi]`.
    ///
    /// Equal to `2 acos(|<a, b>|)`, evaluated through `atan2` so that nearly
    /// identical orientations do not lose precision.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        let rel = self.conjugate() * *other;
        let vn = math::norm([rel.x, rel.y, rel.z]);
        let a = 2.0 * math::atan2(vn, rel.w.abs());
        a.clamp(0.0, core::f64::consts::PI)
    }

    /// Rotation about world z, extracted as `atan2` of the rotated x axis.
    pub fn yaw(&self) -> f64 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        math::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Shepperd's method; the input is assumed to be a rotation matrix.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Result<Self, InvalidPose> {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z) = if tr > 0.0 {
            let s = math::sqrt(tr + 1.0) * 2.0;
            (0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = math::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
            ((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = math::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
            ((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = math::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
            ((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        Quat::new(w, x, y, z)
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Rigid transform in 3-D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct Pose {
    position: Vec3,
    orientation: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: [0.0; 3], orientation: Quat::IDENTITY };

    pub fn new(position: [f64; 3], orientation: Quat) -> Self {
        Pose { position, orientation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose { position: [x, y, z], orientation: Quat::IDENTITY }
    }

    pub fn from_rotation(orientation: Quat) -> Self {
        Pose { position: [0.0; 3], orientation }
    }

    pub fn rotz(theta: f64) -> Self {
        Self::from_rotation(Quat::rotz(theta))
    }

    pub fn position(&self) -> [f64; 3] {
        self.position
    }

    pub fn orientation(&self) -> Quat {
        self.orientation
    }

    pub fn with_position(&self, position: [f64; 3]) -> Self {
        Pose { position, orientation: self.orientation }
    }

    pub fn with_orientation(&self, orientation: Quat) -> Self {
        Pose { position: self.position, orientation }
    }

    /// Applies `other` expressed in this pose's frame: `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: math::add(self.position, self.orientation.rotate(other.position)),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let q = self.orientation.conjugate();
        Pose { position: math::scale(q.rotate(self.position), -1.0), orientation: q }
    }

    /// Transforms a point from this pose's frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        math::add(self.position, self.orientation.rotate(p))
    }

    pub fn to_array(&self) -> [f64; 7] {
        let p = self.position;
        let q = self.orientation;
        [p[0], p[1], p[2], q.w, q.x, q.y, q.z]
    }

    /// Row-major homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.orientation.to_matrix();
        let p = self.position;
        [
            [r[0][0], r[0][1], r[0][2], p[0]],
            [r[1][0], r[1][1], r[1][2], p[1]],
            [r[2][0], r[2][1], r[2][2], p[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4]) -> Result<Self, InvalidPose> {
        let r = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        let p = [m[0][3], m[1][3], m[2][3]];
        if p.iter().any(|v| !v.is_finite()) {
            return Err(InvalidPose::NonFinite);
        }
        Ok(Pose { position: p, orientation: Quat::from_matrix(&r)? })
    }
}

impl TryFrom<[f64; 7]> for Pose {
    type Error = InvalidPose;

    fn try_from(a: [f64; 7]) -> Result<Self, Self::Error> {
        if a[..3].iter().any(|v| !v.is_finite()) {
            return Err(InvalidPose::NonFinite);
        }
        Ok(Pose { position: [a[0], a[1], a[2]], orientation: Quat::new(a[3], a[4], a[5], a[6])? })
    }
}

impl From<Pose> for [f64; 7] {
    fn from(p: Pose) -> Self {
        p.to_array()
    }
}

/// Translational and angular distance between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Meters.
    pub translational: f64,
    /// Radians, in `[0, pi]`.
    pub angular: f64,
}

impl PoseError {
    pub fn within(&self, translational: f64, angular: f64) -> bool {
        self.translational <= translational && self.angular <= angular
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

/// The target expressed in the object's frame: `obj^-1 * target`.
pub fn relative_target(obj_demo: &Pose, target_demo: &Pose) -> Pose {
    obj_demo.inverse().compose(target_demo)
}

/// Places a relative target onto a new object pose: `obj_new * relative`.
pub fn retarget(relative: &Pose, obj_new: &Pose) -> Pose {
    obj_new.compose(relative)
}

pub fn pose_error(a: &Pose, b: &Pose) -> PoseError {
    PoseError {
        translational: math::norm(math::sub(a.position, b.position)),
        angular: a.orientation.angle_to(&b.orientation),
    }
}
