use nalgebra::Vector2;

use crate::geometry::{rotate_z, ObjectState3D};

type Polygon = Vec<Vector2<f64>>;

/// Counter-clockwise bird's-eye footprint.
fn footprint(s: &ObjectState3D) -> Polygon {
    let c = s.center();
    let (w, l, _) = s.dims();
    [(1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .map(|&(a, b)| {
            let p = rotate_z(&nalgebra::Vector3::new(a * l / 2.0, b * w / 2.0, 0.0), s.yaw());
            Vector2::new(c.x + p.x, c.y + p.y)
        })
        .collect()
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Sutherland–Hodgman: `subject` clipped by the convex counter-clockwise `clip`.
pub fn clip_polygon(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Polygon {
    let mut out: Polygon = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (dc, dp) = (cross(&a, &b, &cur), cross(&a, &b, &prev));
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(prev + (cur - prev) * (dp / (dp - dc)));
            }
        }
    }
    out
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(p: &[Vector2<f64>]) -> f64 {
    let n = p.len();
    (0..n).map(|i| p[i].x * p[(i + 1) % n].y - p[(i + 1) % n].x * p[i].y).sum::<f64>() / 2.0
}

/// Volume of the intersection of two yaw-rotated boxes (vertical axes parallel).
pub fn intersection_volume(a: &ObjectState3D, b: &ObjectState3D) -> f64 {
    let (za, zb) = (a.center().z, b.center().z);
    let (ha, hb) = (a.dims().2, b.dims().2);
    let dz = ((za + ha / 2.0).min(zb + hb / 2.0) - (za - ha / 2.0).max(zb - hb / 2.0)).max(0.0);
    if dz == 0.0 {
        return 0.0;
    }
    let area = polygon_area(&clip_polygon(&footprint(a), &footprint(b))).max(0.0);
    area * dz
}

/// Rotated-box 3D intersection over union, in `[0, 1]`.
pub fn iou3d(a: &ObjectState3D, b: &ObjectState3D) -> f64 {
    let inter = intersection_volume(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn boxed(x: f64, y: f64, z: f64, dims: (f64, f64, f64), yaw: f64) -> ObjectState3D {
        ObjectState3D::stationary(Vector3::new(x, y, z), dims, yaw).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = boxed(1.0, 2.0, 0.5, (1.0, 2.0, 1.5), 0.4);
        assert!((iou3d(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(iou3d(&a, &boxed(10.0, 2.0, 0.5, (1.0, 2.0, 1.5), 0.4)), 0.0);
        assert_eq!(iou3d(&a, &boxed(1.0, 2.0, 5.0, (1.0, 2.0, 1.5), 0.4)), 0.0);
    }

    #[test]
    fn half_offset_unit_cubes() {
        let a = boxed(0.0, 0.0, 0.0, (1.0, 1.0, 1.0), 0.0);
        let b = boxed(0.5, 0.0, 0.0, (1.0, 1.0, 1.0), 0.0);
        assert!((iou3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn concentric_rotated_unit_cubes() {
        // the overlap is a regular octagon with area 2(sqrt2 - 1)
        let a = boxed(0.0, 0.0, 0.0, (1.0, 1.0, 1.0), 0.0);
        let b = boxed(0.0, 0.0, 0.0, (1.0, 1.0, 1.0), FRAC_PI_4);
        let oct = 2.0 * (2f64.sqrt() - 1.0);
        assert!((iou3d(&a, &b) - oct / (2.0 - oct)).abs() < 1e-12);
    }

    #[test]
    fn contained_box() {
        let a = boxed(0.0, 0.0, 0.0, (2.0, 2.0, 2.0), 0.3);
        let b = boxed(0.0, 0.0, 0.0, (1.0, 1.0, 1.0), 1.1);
        assert!((iou3d(&a, &b) - 1.0 / 8.0).abs() < 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = ObjectState3D> {
        (-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, 0.2..3.0f64, 0.2..3.0f64, 0.2..3.0f64, -PI..PI)
            .prop_map(|(x, y, z, w, l, h, yaw)| boxed(x, y, z, (w, l, h), yaw))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let (ab, ba) = (iou3d(&a, &b), iou3d(&b, &a));
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn rigid_motion_invariant(a in arb_box(), b in arb_box(), t in prop::array::uniform3(-50.0..50.0f64), yaw in -PI..PI) {
            let base = iou3d(&a, &b);
            let moved = |s: &ObjectState3D| {
                let c = rotate_z(&s.center(), yaw) + Vector3::from(t);
                s.with_center(c).with_yaw(s.yaw() + yaw)
            };
            prop_assert!((iou3d(&moved(&a), &moved(&b)) - base).abs() < 1e-9);
        }
    }
}
