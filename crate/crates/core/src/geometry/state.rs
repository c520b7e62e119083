use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let r = (yaw + PI).rem_euclid(TAU);
    // rem_euclid may round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        -PI
    } else {
        r - PI
    }
}

/// Rotates `p` about the world `z` axis by `yaw`.
pub fn rotate_z(p: &Vector3<f64>, yaw: f64) -> Vector3<f64> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}

/// Ten-parameter object state: box center, dimensions, yaw and velocity, all in the world frame.
///
/// `l` extends along the yaw-rotated `x` axis, `w` along the rotated `y` axis and `h` along
/// world `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateFields", into = "StateFields")]
pub struct ObjectState3D {
    center: Vector3<f64>,
    w: f64,
    l: f64,
    h: f64,
    yaw: f64,
    velocity: Vector3<f64>,
}

impl ObjectState3D {
    /// `dims` is `(w, l, h)`.
    pub fn new(center: Vector3<f64>, dims: (f64, f64, f64), yaw: f64, velocity: Vector3<f64>) -> Result<Self, GeometryError> {
        let (w, l, h) = dims;
        if center.iter().chain(velocity.iter()).any(|v| !v.is_finite()) || !yaw.is_finite() {
            return Err(GeometryError::NonFinite("object state"));
        }
        if !(w > 0.0 && l > 0.0 && h > 0.0 && w.is_finite() && l.is_finite() && h.is_finite()) {
            return Err(GeometryError::InvalidDimensions { w, l, h });
        }
        Ok(Self { center, w, l, h, yaw: normalize_yaw(yaw), velocity })
    }

    /// Static box with zero velocity.
    pub fn stationary(center: Vector3<f64>, dims: (f64, f64, f64), yaw: f64) -> Result<Self, GeometryError> {
        Self::new(center, dims, yaw, Vector3::zeros())
    }

    /// Parameters in the order `x, y, z, w, l, h, yaw, vx, vy, vz`.
    pub fn from_params(p: [f64; 10]) -> Result<Self, GeometryError> {
        Self::new(Vector3::new(p[0], p[1], p[2]), (p[3], p[4], p[5]), p[6], Vector3::new(p[7], p[8], p[9]))
    }

    pub fn params(&self) -> [f64; 10] {
        [
            self.center.x,
            self.center.y,
            self.center.z,
            self.w,
            self.l,
            self.h,
            self.yaw,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        ]
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    /// `(w, l, h)`
    pub fn dims(&self) -> (f64, f64, f64) {
        (self.w, self.l, self.h)
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.velocity
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    pub fn with_center(mut self, center: Vector3<f64>) -> Self {
        self.center = center;
        self
    }

    pub fn with_velocity(mut self, velocity: Vector3<f64>) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.yaw = normalize_yaw(yaw);
        self
    }

    pub fn translated(self, delta: &Vector3<f64>) -> Self {
        let c = self.center + delta;
        self.with_center(c)
    }

    /// Local-frame point `(along l, along w, along z)` mapped to world coordinates.
    pub fn local_to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.center + rotate_z(local, self.yaw)
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.l / 2.0, self.w / 2.0, self.h / 2.0)
    }
}

/// The eight corners of the yaw-rotated cuboid.
///
/// Corner `i` takes `+l/2` when bit 0 of `i` is set (`-l/2` otherwise), `+w/2` for bit 1 and
/// `+h/2` for bit 2. Corner 0 is therefore `(-l/2, -w/2, -h/2)` in the box frame and corner 7
/// is `(+l/2, +w/2, +h/2)`.
pub fn box_corners(state: &ObjectState3D) -> [Vector3<f64>; 8] {
    let half = state.half_extents();
    std::array::from_fn(|i| {
        let sign = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
        state.local_to_world(&Vector3::new(sign(0) * half.x, sign(1) * half.y, sign(2) * half.z))
    })
}

/// Flat serialized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFields {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub yaw: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub vz: f64,
}

impl TryFrom<StateFields> for ObjectState3D {
    type Error = GeometryError;

    fn try_from(f: StateFields) -> Result<Self, Self::Error> {
        ObjectState3D::from_params([f.x, f.y, f.z, f.w, f.l, f.h, f.yaw, f.vx, f.vy, f.vz])
    }
}

impl From<ObjectState3D> for StateFields {
    fn from(s: ObjectState3D) -> Self {
        let [x, y, z, w, l, h, yaw, vx, vy, vz] = s.params();
        StateFields { x, y, z, w, l, h, yaw, vx, vy, vz }
    }
}
