use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, ObjectState3D};

/// Number of fixed keypoints: the box center followed by the six face centers.
pub const FIXED_KEYPOINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointKind {
    Fixed,
    Learned,
}

/// World-frame keypoints of one object, with a parallel kind tag per point.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    points: Vec<Vector3<f64>>,
    kinds: Vec<KeypointKind>,
}

impl KeypointSet {
    pub fn new(points: Vec<Vector3<f64>>, kinds: Vec<KeypointKind>) -> Self {
        assert_eq!(points.len(), kinds.len(), "keypoint kinds must parallel points");
        Self { points, kinds }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn kinds(&self) -> &[KeypointKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, kind: KeypointKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector3<f64>, KeypointKind)> {
        self.points.iter().zip(self.kinds.iter().copied())
    }
}

/// Fixed keypoints (center, then the `+l, -l, +w, -w, +h, -h` face centers) followed by one
/// learned keypoint per offset. Offsets are fractions of the half extents in the box frame.
pub fn generate_keypoints(state: &ObjectState3D, learned_offsets: &[[f64; 3]]) -> Result<KeypointSet, GeometryError> {
    for (index, off) in learned_offsets.iter().enumerate() {
        if let Some(&value) = off.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(GeometryError::OffsetOutOfRange { index, value });
        }
    }
    let half = state.half_extents();
    let faces = [
        Vector3::new(half.x, 0.0, 0.0),
        Vector3::new(-half.x, 0.0, 0.0),
        Vector3::new(0.0, half.y, 0.0),
        Vector3::new(0.0, -half.y, 0.0),
        Vector3::new(0.0, 0.0, half.z),
        Vector3::new(0.0, 0.0, -half.z),
    ];
    let mut points = Vec::with_capacity(FIXED_KEYPOINTS + learned_offsets.len());
    points.push(state.center());
    points.extend(faces.iter().map(|f| state.local_to_world(f)));
    points.extend(learned_offsets.iter().map(|o| state.local_to_world(&Vector3::new(o[0], o[1], o[2]).component_mul(&half))));
    let mut kinds = vec![KeypointKind::Fixed; FIXED_KEYPOINTS];
    kinds.resize(points.len(), KeypointKind::Learned);
    Ok(KeypointSet { points, kinds })
}

/// Shifts every keypoint by `velocity * dt`.
pub fn motion_compensate(kp: &KeypointSet, velocity: &Vector3<f64>, dt: f64) -> KeypointSet {
    assert!(dt >= 0.0, "motion compensation interval must be non-negative, got {dt}");
    let shift = velocity * dt;
    KeypointSet { points: kp.points.iter().map(|p| p + shift).collect(), kinds: kp.kinds.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_cube() -> ObjectState3D {
        ObjectState3D::stationary(Vector3::zeros(), (1.0, 1.0, 1.0), 0.0).unwrap()
    }

    #[test]
    fn fixed_keypoints_are_center_and_face_centers() {
        let kp = generate_keypoints(&unit_cube(), &[]).unwrap();
        let expect = [
            [0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0],
            [-0.5, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, -0.5, 0.0],
            [0.0, 0.0, 0.5],
            [0.0, 0.0, -0.5],
        ];
        assert_eq!(kp.len(), 7);
        for (p, e) in kp.points().iter().zip(expect) {
            assert_eq!([p.x, p.y, p.z], e);
        }
        assert_eq!(kp.count(KeypointKind::Fixed), 7);
    }

    #[test]
    fn zero_offset_is_center() {
        let s = ObjectState3D::stationary(Vector3::new(3.0, -2.0, 1.0), (1.0, 2.0, 1.5), 0.7).unwrap();
        let kp = generate_keypoints(&s, &[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(kp.points()[7], s.center());
        assert_eq!(kp.kinds()[7], KeypointKind::Learned);
    }

    #[test]
    fn unit_offset_scales_by_half_extents() {
        let s = ObjectState3D::stationary(Vector3::new(1.0, 1.0, 1.0), (1.0, 2.0, 1.0), 0.0).unwrap();
        let kp = generate_keypoints(&s, &[[1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(kp.points()[7], Vector3::new(2.0, 1.5, 1.5));
    }

    #[test]
    fn offset_out_of_range_is_rejected() {
        let err = generate_keypoints(&unit_cube(), &[[0.0, 0.0, 0.0], [0.2, -1.5, 0.0]]).unwrap_err();
        assert_eq!(err, GeometryError::OffsetOutOfRange { index: 1, value: -1.5 });
        assert!(generate_keypoints(&unit_cube(), &[[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn motion_compensation_shifts_linearly() {
        let kp = generate_keypoints(&unit_cube(), &[[0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(motion_compensate(&kp, &Vector3::zeros(), 3.0), kp);
        assert_eq!(motion_compensate(&kp, &Vector3::new(4.0, 1.0, 2.0), 0.0), kp);
        let moved = motion_compensate(&kp, &Vector3::new(1.0, 2.0, 0.0), 0.5);
        for (a, b) in kp.points().iter().zip(moved.points()) {
            assert_eq!(b - a, Vector3::new(0.5, 1.0, 0.0));
        }
        assert_eq!(moved.kinds(), kp.kinds());
    }

    proptest! {
        #[test]
        fn fixed_part_ignores_learned_offsets(
            offs in proptest::collection::vec(proptest::array::uniform3(-1.0..=1.0f64), 0..6),
            yaw in -3.0..3.0f64,
        ) {
            let s = ObjectState3D::stationary(Vector3::new(1.0, 2.0, 0.5), (0.8, 1.9, 1.4), yaw).unwrap();
            let base = generate_keypoints(&s, &[]).unwrap();
            let with = generate_keypoints(&s, &offs).unwrap();
            prop_assert_eq!(&with.points()[..FIXED_KEYPOINTS], base.points());
            prop_assert_eq!(with.len(), FIXED_KEYPOINTS + offs.len());
        }

        // dyadic inputs keep every sum exact
        #[test]
        fn compensation_composes_exactly(
            v in proptest::array::uniform3(-64i32..64), p in proptest::array::uniform3(-1024i32..1024),
            t1 in 0u32..64, t2 in 0u32..64,
        ) {
            let vel = Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64);
            let kp = KeypointSet::new(
                vec![Vector3::new(p[0] as f64 / 4.0, p[1] as f64 / 4.0, p[2] as f64 / 4.0)],
                vec![KeypointKind::Fixed],
            );
            let (dt1, dt2) = (t1 as f64 / 8.0, t2 as f64 / 8.0);
            let twice = motion_compensate(&motion_compensate(&kp, &vel, dt1), &vel, dt2);
            prop_assert_eq!(twice, motion_compensate(&kp, &vel, dt1 + dt2));
        }

        #[test]
        fn compensation_composes_closely(
            v in proptest::array::uniform3(-20.0..20.0f64), dt1 in 0.0..2.0f64, dt2 in 0.0..2.0f64,
        ) {
            let vel = Vector3::new(v[0], v[1], v[2]);
            let kp = generate_keypoints(&unit_cube(), &[[0.3, -0.2, 0.9]]).unwrap();
            let twice = motion_compensate(&motion_compensate(&kp, &vel, dt1), &vel, dt2);
            let once = motion_compensate(&kp, &vel, dt1 + dt2);
            for (a, b) in twice.points().iter().zip(once.points()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
        }
    }
}
