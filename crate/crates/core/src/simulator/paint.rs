use rand::Rng as _;
use rand_distr::StandardNormal;

use super::PyramidConfig;
use crate::feature::{FeatureLevel, FeaturePyramid};
use crate::geometry::{CameraModel, ObjectState3D};
use crate::rng::Rng;
use crate::visibility::projected_rect;

/// Standard deviation of the noise added to every painted cell.
pub const BACKGROUND_SIGMA: f64 = 0.01;

/// `(height, width)` of the level with `stride` for a `width x height` image.
pub fn level_shape(cam: &CameraModel, stride: f64) -> (usize, usize) {
    ((cam.height() as f64 / stride).ceil() as usize, (cam.width() as f64 / stride).ceil() as usize)
}

/// Paints one camera's pyramid. Every cell whose center lies in some entity's projected
/// rectangle takes the value of the entity with the smallest mean depth there: the object's
/// signature, or zeros for an occluder. All cells then receive Gaussian noise.
pub fn paint_pyramid(
    cam: &CameraModel,
    cfg: &PyramidConfig,
    objects: &[(ObjectState3D, &[f64])],
    occluders: &[ObjectState3D],
    rng: &mut Rng,
) -> FeaturePyramid {
    let c = cfg.channels;
    let zeros = vec![0.0; c];
    let rects: Vec<_> = objects
        .iter()
        .map(|(s, sig)| (*s, *sig))
        .chain(occluders.iter().map(|s| (*s, zeros.as_slice())))
        .filter_map(|(s, value)| projected_rect(cam, &s).ok().map(|r| (r, value)))
        .collect();
    let levels = cfg
        .strides
        .iter()
        .map(|&stride| {
            let (h, w) = level_shape(cam, stride);
            let mut depth = vec![f64::INFINITY; h * w];
            let mut owner: Vec<Option<usize>> = vec![None; h * w];
            for (e, (r, _)) in rects.iter().enumerate() {
                // cells whose centers (x + 0.5) * stride fall inside the closed rectangle
                let x0 = ((r.u_min / stride - 0.5).ceil().max(0.0)) as usize;
                let y0 = ((r.v_min / stride - 0.5).ceil().max(0.0)) as usize;
                let x1 = (r.u_max / stride - 0.5).floor();
                let y1 = (r.v_max / stride - 0.5).floor();
                if x1 < 0.0 || y1 < 0.0 {
                    continue;
                }
                let x1 = (x1 as usize).min(w.saturating_sub(1));
                let y1 = (y1 as usize).min(h.saturating_sub(1));
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let i = y * w + x;
                        if r.depth < depth[i] {
                            depth[i] = r.depth;
                            owner[i] = Some(e);
                        }
                    }
                }
            }
            let mut level = FeatureLevel::zeros(h, w, c, stride);
            for (i, cell) in level.values_mut().chunks_exact_mut(c).enumerate() {
                let base = owner[i].map(|e| rects[e].1);
                for (k, v) in cell.iter_mut().enumerate() {
                    let noise = BACKGROUND_SIGMA * rng.sample::<f64, _>(StandardNormal);
                    *v = (base.map_or(0.0, |b| b[k]) + noise) as f32;
                }
            }
            level
        })
        .collect();
    FeaturePyramid::new(cam.id(), levels).expect("validated pyramid config")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::{Matrix3, Vector3};

    fn cam() -> CameraModel {
        CameraModel::new(0, (100.0, 100.0), (64.0, 32.0), Matrix3::identity(), Vector3::zeros(), 128, 64).unwrap()
    }

    #[test]
    fn nearer_signature_wins_contested_cells() {
        let cfg = PyramidConfig { channels: 2, strides: vec![4.0] };
        let near = ObjectState3D::stationary(Vector3::new(-0.3, 0.0, 5.0), (1.0, 1.0, 1.0), 0.0).unwrap();
        let far = ObjectState3D::stationary(Vector3::new(0.3, 0.0, 8.0), (1.0, 1.0, 1.0), 0.0).unwrap();
        let (a, b) = ([1.0, 0.0], [0.0, 1.0]);
        let pyr = paint_pyramid(&cam(), &cfg, &[(far, &b), (near, &a)], &[], &mut substream(1, "t", 0));
        let level = &pyr.levels()[0];
        let rn = projected_rect(&cam(), &near).unwrap();
        let rf = projected_rect(&cam(), &far).unwrap();
        // oracle: per-cell depth comparison over both rectangles
        for y in 0..level.height() {
            for x in 0..level.width() {
                let (u, v) = ((x as f64 + 0.5) * 4.0, (y as f64 + 0.5) * 4.0);
                let cell = level.cell(x, y);
                let want = if rn.contains(u, v) {
                    [1.0, 0.0]
                } else if rf.contains(u, v) {
                    [0.0, 1.0]
                } else {
                    [0.0, 0.0]
                };
                for (got, w) in cell.iter().zip(want) {
                    assert!((*got as f64 - w).abs() < 0.06, "cell ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn level_shapes_round_up() {
        assert_eq!(level_shape(&cam(), 8.0), (8, 16));
        assert_eq!(level_shape(&cam(), 24.0), (3, 6));
    }
}
