use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Points closer than this to the image plane are rejected as behind the camera.
pub const DEFAULT_DEPTH_EPSILON: f64 = 1e-6;

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Pixel coordinates and camera-frame depth of a projected world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// A static pinhole camera: intrinsics, world-to-camera pose and image extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct CameraModel {
    id: u32,
    focal_x: f64,
    focal_y: f64,
    principal_x: f64,
    principal_y: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: u32,
    height: u32,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        focal: (f64, f64),
        principal: (f64, f64),
        rotation_world_to_cam: Matrix3<f64>,
        translation_world_to_cam: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let invalid = |reason: String| GeometryError::InvalidCamera { id, reason };
        if !(focal.0 > 0.0 && focal.1 > 0.0 && focal.0.is_finite() && focal.1.is_finite()) {
            return Err(invalid(format!("focal lengths must be positive, got {focal:?}")));
        }
        if !(principal.0.is_finite() && principal.1.is_finite()) {
            return Err(invalid("principal point is not finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(invalid(format!("image extent {width}x{height} is empty")));
        }
        if rotation_world_to_cam.iter().any(|v| !v.is_finite()) || translation_world_to_cam.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pose contains non-finite values".into()));
        }
        let gram = rotation_world_to_cam.transpose() * rotation_world_to_cam - Matrix3::identity();
        let err = gram.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if err > ORTHONORMAL_TOLERANCE {
            return Err(invalid(format!("rotation is not orthonormal (|R^T R - I| = {err:e})")));
        }
        if rotation_world_to_cam.determinant() <= 0.0 {
            return Err(invalid("rotation has negative determinant".into()));
        }
        Ok(Self {
            id,
            focal_x: focal.0,
            focal_y: focal.1,
            principal_x: principal.0,
            principal_y: principal.1,
            rotation: rotation_world_to_cam,
            translation: translation_world_to_cam,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with world `+z` as the up hint.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        id: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        focal: (f64, f64),
        principal: (f64, f64),
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            // looking straight down or up
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = forward.cross(&right).normalize();
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(id, focal, principal, rotation, translation, width, height)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn focal(&self) -> (f64, f64) {
        (self.focal_x, self.focal_y)
    }

    pub fn principal(&self) -> (f64, f64) {
        (self.principal_x, self.principal_y)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Projects a world point. Coordinates outside the image are returned as-is.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Projection, GeometryError> {
        self.project_with_epsilon(p, DEFAULT_DEPTH_EPSILON)
    }

    pub fn project_with_epsilon(&self, p: &Vector3<f64>, depth_epsilon: f64) -> Result<Projection, GeometryError> {
        let pc = self.to_camera(p);
        let depth = pc.z;
        if depth <= depth_epsilon || !depth.is_finite() {
            return Err(GeometryError::BehindCamera { depth });
        }
        Ok(Projection {
            u: self.focal_x * pc.x / depth + self.principal_x,
            v: self.focal_y * pc.y / depth + self.principal_y,
            depth,
        })
    }

    /// Inverse of [`CameraModel::project`] for a known depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let pc =
            Vector3::new((u - self.principal_x) / self.focal_x * depth, (v - self.principal_y) / self.focal_y * depth, depth);
        self.rotation.transpose() * (pc - self.translation)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Wire form of a camera: `K = [fx, fy, cx, cy]`, `R` row-major world-to-camera, `t` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: u32,
    #[serde(rename = "K")]
    pub k: [f64; 4],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl TryFrom<CameraRecord> for CameraModel {
    type Error = GeometryError;

    fn try_from(rec: CameraRecord) -> Result<Self, Self::Error> {
        CameraModel::new(
            rec.id,
            (rec.k[0], rec.k[1]),
            (rec.k[2], rec.k[3]),
            Matrix3::from_row_slice(&rec.r),
            Vector3::from_column_slice(&rec.t),
            rec.width,
            rec.height,
        )
    }
}

impl From<CameraModel> for CameraRecord {
    fn from(cam: CameraModel) -> Self {
        let r = &cam.rotation;
        CameraRecord {
            id: cam.id,
            k: [cam.focal_x, cam.focal_y, cam.principal_x, cam.principal_y],
            r: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            t: [cam.translation.x, cam.translation.y, cam.translation.z],
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Versioned camera network document (`docs/camera_network.schema.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraNetwork {
    pub schema_version: u32,
    pub cameras: Vec<CameraModel>,
}

impl CameraNetwork {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> CameraModel {
        CameraModel::new(0, (100.0, 100.0), (50.0, 50.0), Matrix3::identity(), Vector3::zeros(), 100, 100).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let p = identity_cam().project(&Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 10.0));
    }

    #[test]
    fn lateral_offset_projects_linearly() {
        let p = identity_cam().project(&Vector3::new(1.0, 0.0, 10.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (60.0, 50.0, 10.0));
    }

    #[test]
    fn negative_depth_is_behind_camera() {
        let err = identity_cam().project(&Vector3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert_eq!(err, GeometryError::BehindCamera { depth: -1.0 });
        assert!(identity_cam().project(&Vector3::new(0.0, 0.0, 1e-7)).is_err());
    }

    #[test]
    fn rejects_bad_rotation_and_intrinsics() {
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraModel::new(3, (1.0, 1.0), (0.0, 0.0), skew, Vector3::zeros(), 10, 10).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraModel::new(3, (1.0, 1.0), (0.0, 0.0), reflect, Vector3::zeros(), 10, 10).is_err());
        assert!(CameraModel::new(3, (0.0, 1.0), (0.0, 0.0), Matrix3::identity(), Vector3::zeros(), 10, 10).is_err());
        assert!(CameraModel::new(3, (1.0, 1.0), (0.0, 0.0), Matrix3::identity(), Vector3::zeros(), 0, 10).is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let cam = CameraModel::look_at(
            1,
            Vector3::new(-5.0, 0.0, 3.0),
            Vector3::new(0.0, 0.0, 0.0),
            (300.0, 300.0),
            (160.0, 120.0),
            320,
            240,
        )
        .unwrap();
        let p = cam.project(&Vector3::zeros()).unwrap();
        assert!((p.u - 160.0).abs() < 1e-9 && (p.v - 120.0).abs() < 1e-9);
        assert!((cam.center() - Vector3::new(-5.0, 0.0, 3.0)).norm() < 1e-12);
        // a point above the target appears higher in the image
        let up = cam.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(up.v < p.v);
        // world +y is to the camera's left when looking along +x
        let left = cam.project(&Vector3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(left.u < p.u);
    }

    #[test]
    fn camera_json_roundtrip_and_unknown_fields() {
        let json = r#"{"schema_version":1,"cameras":[{"id":4,"K":[100,110,50,40],"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,2],"width":100,"height":80}]}"#;
        let net = CameraNetwork::from_json(json).unwrap();
        assert_eq!(net.cameras[0].focal(), (100.0, 110.0));
        let back: CameraNetwork = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        assert_eq!(back, net);
        let typo = json.replace("\"width\"", "\"widht\"");
        assert!(CameraNetwork::from_json(&typo).is_err());
    }
}
