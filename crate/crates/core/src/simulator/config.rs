use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{CameraModel, ObjectState3D};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// Seconds.
    pub t: f64,
    /// Box center in meters.
    pub p: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub identity: u64,
    #[serde(default = "default_category")]
    pub category: String,
    /// `[w, l, h]` in meters.
    pub dims: [f64; 3],
    pub waypoints: Vec<Waypoint>,
}

fn default_category() -> String {
    "person".into()
}

/// Static cuboid that blocks views and paints zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occluder {
    pub center: [f64; 3],
    /// `[w, l, h]` in meters.
    pub dims: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl Occluder {
    pub fn state(&self) -> Result<ObjectState3D, SimError> {
        let [x, y, z] = self.center;
        let [w, l, h] = self.dims;
        ObjectState3D::stationary(Vector3::new(x, y, z), (w, l, h), self.yaw).map_err(SimError::Geometry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of each center coordinate, meters.
    pub center: f64,
    /// Standard deviation of each dimension, meters.
    pub dims: f64,
    /// Standard deviation of yaw, radians.
    pub yaw: f64,
    /// Probability that an object produces no detection in a frame.
    pub dropout: f64,
    /// Expected norm of the noise added to a unit signature.
    pub embedding: f64,
    /// Objects whose mean visibility over cameras is below this are not detected.
    pub min_visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PyramidConfig {
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_strides")]
    pub strides: Vec<f64>,
}

fn default_channels() -> usize {
    128
}

fn default_strides() -> Vec<f64> {
    vec![8.0, 16.0, 32.0, 64.0]
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self { channels: default_channels(), strides: default_strides() }
    }
}

fn default_grid() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    pub cameras: Vec<CameraModel>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    pub objects: Vec<ObjectSpec>,
    /// Hz.
    pub frame_rate: f64,
    /// Seconds.
    pub duration: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub seed: u64,
    #[serde(default)]
    pub pyramid: PyramidConfig,
    /// Samples per axis for visibility.
    #[serde(default = "default_grid")]
    pub visibility_grid: usize,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.schema_version != SCENE_SCHEMA_VERSION {
            return Err(SimError::SchemaVersion { found: self.schema_version, expected: SCENE_SCHEMA_VERSION });
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return invalid(format!("frame_rate must be positive, got {}", self.frame_rate));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return invalid(format!("duration must be non-negative, got {}", self.duration));
        }
        let n = &self.noise;
        for (name, v) in [("center", n.center), ("dims", n.dims), ("yaw", n.yaw), ("embedding", n.embedding)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("noise.{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&n.dropout) {
            return invalid(format!("noise.dropout must be in [0, 1], got {}", n.dropout));
        }
        if !(0.0..=1.0).contains(&n.min_visibility) {
            return invalid(format!("noise.min_visibility must be in [0, 1], got {}", n.min_visibility));
        }
        if self.pyramid.channels < 2 || !self.pyramid.channels.is_multiple_of(2) {
            return invalid(format!("pyramid.channels must be even and at least 2, got {}", self.pyramid.channels));
        }
        if self.pyramid.strides.is_empty()
            || self.pyramid.strides.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.pyramid.strides.windows(2).any(|w| w[1] <= w[0])
        {
            return invalid("pyramid.strides must be positive and strictly increasing".into());
        }
        if self.visibility_grid < 2 {
            return invalid(format!("visibility_grid must be at least 2, got {}", self.visibility_grid));
        }
        let mut ids = HashSet::new();
        for c in &self.cameras {
            if !ids.insert(c.id()) {
                return invalid(format!("duplicate camera id {}", c.id()));
            }
        }
        let mut identities = HashSet::new();
        for o in &self.objects {
            if !identities.insert(o.identity) {
                return invalid(format!("duplicate object identity {}", o.identity));
            }
            let bad = |reason: &str| SimError::InvalidWaypoints { identity: o.identity, reason: reason.into() };
            if o.waypoints.is_empty() {
                return Err(bad("no waypoints"));
            }
            if o.waypoints.iter().any(|w| !w.t.is_finite() || w.p.iter().any(|v| !v.is_finite())) {
                return Err(bad("non-finite waypoint"));
            }
            if o.waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
                return Err(bad("times must be strictly increasing"));
            }
            if o.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return invalid(format!("object {} has non-positive dims", o.identity));
            }
        }
        for o in &self.occluders {
            o.state()?;
        }
        Ok(())
    }

    /// Frames at `k / frame_rate` for every `k` with that time within the duration.
    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate
    }
}

impl ObjectSpec {
    /// Box at time `t`, or `None` outside the waypoint span. A single waypoint holds forever.
    pub fn state_at(&self, t: f64) -> Option<ObjectState3D> {
        let wp = &self.waypoints;
        let [w, l, h] = self.dims;
        let at = |p: Vector3<f64>, v: Vector3<f64>, yaw: f64| ObjectState3D::new(p, (w, l, h), yaw, v).ok();
        if wp.len() == 1 {
            return at(Vector3::from(wp[0].p), Vector3::zeros(), 0.0);
        }
        if t < wp[0].t || t > wp[wp.len() - 1].t {
            return None;
        }
        // last segment whose start is at or before t
        let seg = wp.windows(2).rposition(|s| s[0].t <= t).unwrap_or(0);
        let (a, b) = (&wp[seg], &wp[seg + 1]);
        let (pa, pb) = (Vector3::from(a.p), Vector3::from(b.p));
        let v = (pb - pa) / (b.t - a.t);
        at(pa + v * (t - a.t), v, self.heading(seg))
    }

    /// Heading of segment `seg`, borrowing from the nearest moving segment when it is stationary.
    fn heading(&self, seg: usize) -> f64 {
        let n = self.waypoints.len() - 1;
        let planar = |i: usize| {
            let (a, b) = (&self.waypoints[i], &self.waypoints[i + 1]);
            (b.p[0] - a.p[0], b.p[1] - a.p[1])
        };
        let moving = |i: usize| {
            let (dx, dy) = planar(i);
            (dx.hypot(dy) > 1e-9).then(|| dy.atan2(dx))
        };
        (0..n).flat_map(|d| [seg.checked_sub(d), Some(seg + d)]).flatten().filter(|&i| i < n).find_map(moving).unwrap_or(0.0)
    }
}
