//! Flat binary container for painted pyramids; the byte layout is in `docs/pyramid_format.md`.

use std::io::Write;

use super::{level_shape, PyramidConfig, SimError};
use crate::feature::{FeatureLevel, FeaturePyramid};
use crate::geometry::CameraModel;

pub const PYRAMID_MAGIC: &[u8; 8] = b"OIPYRMD1";
const VERSION: u32 = 1;

pub fn write_pyramid_header(
    w: &mut (impl Write + ?Sized),
    frames: usize,
    cameras: &[CameraModel],
    cfg: &PyramidConfig,
) -> std::io::Result<()> {
    w.write_all(PYRAMID_MAGIC)?;
    for v in [VERSION, frames as u32, cameras.len() as u32, cfg.strides.len() as u32, cfg.channels as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for cam in cameras {
        w.write_all(&cam.id().to_le_bytes())?;
    }
    for cam in cameras {
        for &stride in &cfg.strides {
            let (h, wd) = level_shape(cam, stride);
            w.write_all(&(h as u32).to_le_bytes())?;
            w.write_all(&(wd as u32).to_le_bytes())?;
            w.write_all(&stride.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Appends one frame: every camera's levels in order, each as row-major `(y, x, c)` floats.
pub fn write_pyramid_frame(w: &mut (impl Write + ?Sized), pyramids: &[FeaturePyramid]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for p in pyramids {
        for level in p.levels() {
            buf.clear();
            buf.reserve(level.values().len() * 4);
            for v in level.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidArchive {
    /// `frames[k][camera]`.
    pub frames: Vec<Vec<FeaturePyramid>>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SimError::Archive(format!("truncated at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_pyramids(bytes: &[u8]) -> Result<PyramidArchive, SimError> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8)? != PYRAMID_MAGIC {
        return Err(SimError::Archive("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(SimError::Archive(format!("unsupported version {version}")));
    }
    let (frames, cameras, levels, channels) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let ids = (0..cameras).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
    let mut shapes = Vec::with_capacity(cameras);
    for _ in 0..cameras {
        let mut per = Vec::with_capacity(levels);
        for _ in 0..levels {
            per.push((c.u32()? as usize, c.u32()? as usize, c.f64()?));
        }
        shapes.push(per);
    }
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut pyrs = Vec::with_capacity(cameras);
        for (id, per) in ids.iter().zip(&shapes) {
            let mut lv = Vec::with_capacity(levels);
            for &(h, w, stride) in per {
                let raw = c.take(h * w * channels * 4)?;
                let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
                lv.push(FeatureLevel::new(h, w, channels, stride, values).map_err(|e| SimError::Archive(e.to_string()))?);
            }
            pyrs.push(FeaturePyramid::new(*id, lv).map_err(|e| SimError::Archive(e.to_string()))?);
        }
        out.push(pyrs);
    }
    if c.at != bytes.len() {
        return Err(SimError::Archive(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok(PyramidArchive { frames: out })
}

#[cfg(test)]
mod tests {
    use super::super::Simulator;
    use super::*;

    #[test]
    fn round_trip() {
        let objects = serde_json::json!([{"identity": 1, "dims": [0.6, 0.6, 1.7],
            "waypoints": [{"t": 0.0, "p": [0.0, 0.0, 0.85]}, {"t": 1.0, "p": [0.5, 0.0, 0.85]}]}]);
        let cfg = super::super::tests::scene(objects, serde_json::json!([]), serde_json::json!({}));
        let sim = Simulator::new(cfg.clone()).unwrap();
        let frames = sim.frames(0..3, true);
        let mut bytes = Vec::new();
        write_pyramid_header(&mut bytes, 3, &cfg.cameras, &cfg.pyramid).unwrap();
        for f in &frames {
            write_pyramid_frame(&mut bytes, &f.pyramids).unwrap();
        }
        let back = read_pyramids(&bytes).unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.frames[2], frames[2].pyramids);
        assert!(read_pyramids(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_pyramids(&bad).is_err());
    }
}
