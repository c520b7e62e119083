use super::FeatureError;

/// One dense grid of a pyramid, stored row-major as `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    height: usize,
    width: usize,
    channels: usize,
    stride: f64,
    values: Vec<f32>,
}

impl FeatureLevel {
    pub fn new(height: usize, width: usize, channels: usize, stride: f64, values: Vec<f32>) -> Result<Self, FeatureError> {
        if values.len() != height * width * channels || height == 0 || width == 0 || channels == 0 {
            return Err(FeatureError::ShapeMismatch { height, width, channels, len: values.len() });
        }
        Ok(Self { height, width, channels, stride, values })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, stride: f64) -> Self {
        Self { height, width, channels, stride, values: vec![0.0; height * width * channels] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn cell(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.values[base..base + self.channels]
    }

    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let base = (y * self.width + x) * self.channels;
        &mut self.values[base..base + self.channels]
    }

    /// Bilinear sample with zero padding. `u` indexes columns, `v` rows, both in cells.
    pub fn sample(&self, u: f32, v: f32) -> Vec<f32> {
        let mut out = vec![0.0f32; self.channels];
        let corners = Corners::new(self.width, self.height, u, v);
        for k in 0..corners.count {
            let w = corners.weight[k];
            let base = corners.cell[k] * self.channels;
            for (o, x) in out.iter_mut().zip(&self.values[base..base + self.channels]) {
                *o += w * x;
            }
        }
        out
    }
}

/// In-bounds bilinear neighbors of a sample point, in the fixed order
/// `(x0,y0), (x0+1,y0), (x0,y0+1), (x0+1,y0+1)`; out-of-bounds neighbors are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Corners {
    pub count: usize,
    pub cell: [usize; 4],
    pub weight: [f32; 4],
}

impl Corners {
    #[inline]
    pub fn new(width: usize, height: usize, u: f32, v: f32) -> Self {
        let mut out = Corners::default();
        if !(u.is_finite() && v.is_finite()) {
            return out;
        }
        let (x0f, y0f) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0f, v - y0f);
        // beyond +-2^24 the grid is unreachable anyway
        if x0f < -1.0 || y0f < -1.0 || x0f >= width as f32 || y0f >= height as f32 {
            return out;
        }
        let (x0, y0) = (x0f as i64, y0f as i64);
        let candidates = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ];
        for (x, y, w) in candidates {
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                out.cell[out.count] = y as usize * width + x as usize;
                out.weight[out.count] = w;
                out.count += 1;
            }
        }
        out
    }
}

/// Per-camera stack of progressively coarser grids sharing one even channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    camera_id: u32,
    levels: Vec<FeatureLevel>,
}

impl FeaturePyramid {
    pub fn new(camera_id: u32, levels: Vec<FeatureLevel>) -> Result<Self, FeatureError> {
        let first = levels.first().ok_or(FeatureError::NoLevels)?;
        let channels = first.channels;
        if channels % 2 != 0 {
            return Err(FeatureError::OddChannelCount(channels));
        }
        for (i, level) in levels.iter().enumerate() {
            if level.channels != channels {
                return Err(FeatureError::ChannelMismatch { expected: channels, found: level.channels });
            }
            if !(level.stride > 0.0) || (i > 0 && level.stride <= levels[i - 1].stride) {
                return Err(FeatureError::NonIncreasingStride { level: i });
            }
        }
        Ok(Self { camera_id, levels })
    }

    pub fn camera_id(&self) -> u32 {
        self.camera_id
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels
    }

    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [FeatureLevel] {
        &mut self.levels
    }

    pub fn level(&self, index: usize) -> Option<&FeatureLevel> {
        self.levels.get(index)
    }
}

/// Bilinear sample of one pyramid level. Panics if `level` does not exist.
pub fn bilinear_sample(pyr: &FeaturePyramid, level: usize, u: f32, v: f32) -> Vec<f32> {
    pyr.levels[level].sample(u, v)
}

/// Pixel coordinate to cell coordinate for a level of the given stride.
pub fn pixel_to_cell(pixel: f64, stride: f64) -> f64 {
    pixel / stride - 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FeaturePyramid {
        // 3x2 grid, 2 channels; cell (x, y) = (10y + x, -(10y + x))
        let mut values = Vec::new();
        for y in 0..2 {
            for x in 0..3 {
                let v = (10 * y + x) as f32;
                values.extend([v, -v]);
            }
        }
        FeaturePyramid::new(7, vec![FeatureLevel::new(2, 3, 2, 4.0, values).unwrap()]).unwrap()
    }

    #[test]
    fn sample_at_cell_center_is_cell_value() {
        let p = grid();
        assert_eq!(bilinear_sample(&p, 0, 2.0, 1.0), vec![12.0, -12.0]);
        assert_eq!(bilinear_sample(&p, 0, 0.0, 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn midpoint_averages_four_cells() {
        let p = grid();
        // cells 1, 2, 11, 12
        assert_eq!(bilinear_sample(&p, 0, 1.5, 0.5), vec![6.5, -6.5]);
    }

    #[test]
    fn far_outside_is_zero() {
        let p = grid();
        assert_eq!(bilinear_sample(&p, 0, -5.0, -5.0), vec![0.0, 0.0]);
        assert_eq!(bilinear_sample(&p, 0, 100.0, 0.0), vec![0.0, 0.0]);
        assert_eq!(bilinear_sample(&p, 0, f32::NAN, 0.0), vec![0.0, 0.0]);
        assert_eq!(bilinear_sample(&p, 0, 1e30, -1e30), vec![0.0, 0.0]);
    }

    #[test]
    fn border_neighbors_are_zero_padded() {
        let p = grid();
        // half a cell left of (0, 1): half of cell 10 plus half of the padded column
        assert_eq!(bilinear_sample(&p, 0, -0.5, 1.0), vec![5.0, -5.0]);
        assert_eq!(bilinear_sample(&p, 0, 2.25, 1.0), vec![9.0, -9.0]);
    }

    #[test]
    fn pyramid_validation() {
        let lvl = |c: usize, s: f64| FeatureLevel::zeros(2, 2, c, s);
        assert_eq!(FeaturePyramid::new(0, vec![]).unwrap_err(), FeatureError::NoLevels);
        assert_eq!(FeaturePyramid::new(0, vec![lvl(3, 1.0)]).unwrap_err(), FeatureError::OddChannelCount(3));
        assert!(matches!(FeaturePyramid::new(0, vec![lvl(2, 1.0), lvl(4, 2.0)]), Err(FeatureError::ChannelMismatch { .. })));
        assert!(matches!(
            FeaturePyramid::new(0, vec![lvl(2, 2.0), lvl(2, 2.0)]),
            Err(FeatureError::NonIncreasingStride { level: 1 })
        ));
        assert!(FeatureLevel::new(2, 2, 2, 1.0, vec![0.0; 7]).is_err());
    }

    #[test]
    fn pixel_cell_mapping() {
        assert_eq!(pixel_to_cell(4.0, 8.0), 0.0);
        assert_eq!(pixel_to_cell(12.0, 8.0), 1.0);
        assert_eq!(pixel_to_cell(0.0, 8.0), -0.5);
    }
}
