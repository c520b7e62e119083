use nalgebra::Vector3;
use outsidein_core::geometry::{box_corners, CameraModel, ObjectState3D};
use outsidein_core::metrics::iou3d;
use outsidein_core::rng::substream;
use outsidein_core::visibility::{projected_rect, visible_fraction, ProjectedRect};
use proptest::prelude::*;
use rand::Rng;

const RASTER: usize = 1024;

fn camera() -> CameraModel {
    CameraModel::look_at(0, Vector3::new(0.0, -10.0, 3.0), Vector3::new(0.0, 0.0, 0.8), (260.0, 260.0), (160.0, 120.0), 320, 240)
        .unwrap()
}

/// Z-buffer over a 1024 x 1024 lattice of the image: each sample belongs to the covering
/// rectangle of least depth. Returns the target's owned area over its full rectangle area.
fn raster_visibility(cam: &CameraModel, target: &ProjectedRect, blockers: &[ProjectedRect]) -> f64 {
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let (su, sv) = (w / RASTER as f64, h / RASTER as f64);
    let mut owned = 0usize;
    for j in 0..RASTER {
        let v = (j as f64 + 0.5) * sv;
        if v < target.v_min || v > target.v_max {
            continue;
        }
        for i in 0..RASTER {
            let u = (i as f64 + 0.5) * su;
            if u < target.u_min || u > target.u_max {
                continue;
            }
            let nearest_blocker = blockers.iter().filter(|b| b.contains(u, v)).map(|b| b.depth).fold(f64::INFINITY, f64::min);
            if target.depth <= nearest_blocker {
                owned += 1;
            }
        }
    }
    owned as f64 * su * sv / target.area()
}

fn random_box(rng: &mut impl Rng) -> ObjectState3D {
    ObjectState3D::stationary(
        Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..6.0), rng.random_range(0.3..1.5)),
        (rng.random_range(0.3..2.5), rng.random_range(0.3..2.5), rng.random_range(0.5..2.5)),
        rng.random_range(-3.1..3.1),
    )
    .unwrap()
}

#[test]
fn visible_fraction_matches_dense_raster() {
    let cam = camera();
    let mut worst = 0.0f64;
    for scene in 0..100 {
        let mut rng = substream(scene, "visibility-scene", 0);
        let target = random_box(&mut rng);
        let blockers: Vec<_> = (0..rng.random_range(0..5)).map(|_| random_box(&mut rng)).collect();
        let got = visible_fraction(&cam, &target, &blockers, 64).unwrap();
        let rect = projected_rect(&cam, &target).unwrap();
        let rects: Vec<_> = blockers.iter().filter_map(|b| projected_rect(&cam, b).ok()).collect();
        let want = raster_visibility(&cam, &rect, &rects);
        worst = worst.max((got.value - want).abs());
        assert!((got.value - want).abs() <= 0.05, "scene {scene}: {} vs {want}", got.value);
    }
    assert!(worst < 0.05);
}

#[test]
fn left_half_blocker_raster_is_one_half() {
    let cam =
        CameraModel::new(0, (100.0, 100.0), (50.0, 50.0), nalgebra::Matrix3::identity(), Vector3::zeros(), 100, 100).unwrap();
    let target = ObjectState3D::stationary(Vector3::new(0.0, 0.0, 10.0), (1.0, 1.0, 1.0), 0.0).unwrap();
    let rect = projected_rect(&cam, &target).unwrap();
    let half = ProjectedRect { u_min: rect.u_min - 5.0, u_max: (rect.u_min + rect.u_max) / 2.0, depth: 5.0, ..rect };
    let want = raster_visibility(&cam, &rect, &[half]);
    assert!((want - 0.5).abs() < 0.01, "{want}");
}

#[test]
fn rotated_cube_iou_matches_monte_carlo_volume() {
    let a = ObjectState3D::stationary(Vector3::zeros(), (1.0, 1.0, 1.0), 0.0).unwrap();
    let b = a.with_yaw(std::f64::consts::FRAC_PI_4);
    // equal heights, so the volume ratio is the footprint ratio: jittered 1000^2 lattice over a
    let mut rng = substream(5, "iou-mc", 0);
    let n = 1000;
    let (c, s) = (b.yaw().cos(), b.yaw().sin());
    let mut inside = 0usize;
    for i in 0..n {
        for j in 0..n {
            let x = (i as f64 + rng.random::<f64>()) / n as f64 - 0.5;
            let y = (j as f64 + rng.random::<f64>()) / n as f64 - 0.5;
            let (lx, ly) = (c * x + s * y, -s * x + c * y);
            if lx.abs() <= 0.5 && ly.abs() <= 0.5 {
                inside += 1;
            }
        }
    }
    let inter = inside as f64 / (n * n) as f64;
    let mc = inter / (2.0 - inter);
    let got = iou3d(&a, &b);
    assert!((got - mc).abs() <= 1e-3, "{got} vs {mc}");
}

#[test]
fn random_box_iou_matches_monte_carlo_volume() {
    for case in 0..6 {
        let mut rng = substream(case, "iou-pair", 0);
        let a = ObjectState3D::stationary(Vector3::zeros(), (1.0, 1.5, 1.2), rng.random_range(-3.0..3.0)).unwrap();
        let b = ObjectState3D::stationary(
            Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.4..0.4)),
            (rng.random_range(0.6..1.6), rng.random_range(0.6..1.6), rng.random_range(0.8..1.4)),
            rng.random_range(-3.0..3.0),
        )
        .unwrap();
        let inside_b = |p: Vector3<f64>| {
            let d = p - b.center();
            let (c, s) = (b.yaw().cos(), b.yaw().sin());
            let local = Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
            let half = b.half_extents();
            local.x.abs() <= half.x && local.y.abs() <= half.y && local.z.abs() <= half.z
        };
        let n = 100;
        let half = a.half_extents();
        let (c, s) = (a.yaw().cos(), a.yaw().sin());
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let jitter = |idx: usize, r: f64| (idx as f64 + r) / n as f64 * 2.0 - 1.0;
                    let local = Vector3::new(
                        jitter(i, rng.random()) * half.x,
                        jitter(j, rng.random()) * half.y,
                        jitter(k, rng.random()) * half.z,
                    );
                    let world = Vector3::new(c * local.x - s * local.y, s * local.x + c * local.y, local.z);
                    if inside_b(world) {
                        hits += 1;
                    }
                }
            }
        }
        let inter = a.volume() * hits as f64 / (n * n * n) as f64;
        let mc = inter / (a.volume() + b.volume() - inter);
        let got = iou3d(&a, &b);
        assert!((got - mc).abs() <= 1e-3, "case {case}: {got} vs {mc}");
    }
}

proptest! {
    #[test]
    fn back_projection_inverts_projection(
        ex in -8.0f64..8.0, ey in -8.0f64..-2.0, ez in 0.5f64..6.0,
        px in -3.0f64..3.0, py in -3.0f64..3.0, pz in 0.0f64..2.0,
    ) {
        let cam = CameraModel::look_at(1, Vector3::new(ex, ey, ez), Vector3::new(0.0, 0.0, 0.8), (300.0, 280.0), (160.0, 120.0), 320, 240).unwrap();
        let p = Vector3::new(px, py, pz);
        let proj = cam.project(&p);
        prop_assume!(proj.is_ok(), "point behind the camera");
        let proj = proj.unwrap();
        let back = cam.back_project(proj.u, proj.v, proj.depth);
        prop_assert!((back - p).norm() <= 1e-9 * (1.0 + p.norm()));
    }

    #[test]
    fn corners_lie_on_the_box_surface(x in -5.0f64..5.0, y in -5.0f64..5.0, yaw in -3.1f64..3.1, l in 0.2f64..3.0, w in 0.2f64..3.0) {
        let s = ObjectState3D::stationary(Vector3::new(x, y, 1.0), (w, l, 1.5), yaw).unwrap();
        let diag = (l * l + w * w + 1.5 * 1.5).sqrt() / 2.0;
        for corner in box_corners(&s) {
            prop_assert!(((corner - s.center()).norm() - diag).abs() < 1e-9);
        }
    }
}
