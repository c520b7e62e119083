//! Packed-pair deformable aggregation.
//!
//! Channels are stored and processed two at a time so one lane operation advances a channel
//! pair. Sample tuples of a query are walked in canonical order, which groups them into
//! `(camera, level)` tiles. Before tile `k` is accumulated, tile `k + 1` is staged: its neighbor
//! offsets and bilinear weights are resolved and its feature rows are prefetched into cache, so
//! the arithmetic loops stream rows that are already close. In
//! [`PrecisionMode::Full`] every channel sees exactly the operation sequence of
//! [`msda_reference`](super::msda_reference), so results agree bit for bit. In
//! [`PrecisionMode::PackedHalf`] features live in 16-bit storage and every product and running
//! sum is rounded to half precision until the final write to `f32`.

use half::f16;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::msda::{canonical, validate_plan, weight_sum, MsdaOutput, PyramidIndex, SamplePlan, SampleTuple};
use super::pyramid::Corners;
use super::{FeatureError, FeaturePyramid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// 32-bit storage and arithmetic.
    #[default]
    Full,
    /// 16-bit storage, pairwise-packed 16-bit arithmetic.
    #[serde(alias = "half")]
    PackedHalf,
}

/// Per-channel storage format, widened to `f32` for arithmetic.
trait Lane: Copy + Send + Sync {
    fn pack(x: f32) -> Self;
    fn widen(self) -> f32;
    /// Rounds an `f32` result to the lane precision.
    fn round(x: f32) -> f32;
}

impl Lane for f32 {
    #[inline(always)]
    fn pack(x: f32) -> Self {
        x
    }

    #[inline(always)]
    fn widen(self) -> f32 {
        self
    }

    #[inline(always)]
    fn round(x: f32) -> f32 {
        x
    }
}

/// Half-precision bits; a channel pair shares one 32-bit word.
#[derive(Clone, Copy, Debug, PartialEq)]
#[repr(transparent)]
struct Half(u16);

/// Exact widening of half bits, branch-free so it vectorizes.
#[inline(always)]
fn half_to_f32(h: u16) -> f32 {
    let h = h as u32;
    let sign = (h & 0x8000) << 16;
    let magnitude = h & 0x7fff;
    // shifting puts the half exponent and mantissa into f32 position; 2^112 restores the bias,
    // and subnormals come out exact because scaling by a power of two is exact
    let scaled = (f32::from_bits(magnitude << 13) * f32::from_bits(0x7780_0000)).to_bits();
    let special = (magnitude << 13) | 0x7f80_0000;
    f32::from_bits(if magnitude >= 0x7c00 { special } else { scaled } | sign)
}

/// Nearest half-representable value (ties to even), kept in `f32`.
#[inline(always)]
fn round_to_half(x: f32) -> f32 {
    let bits = x.to_bits();
    let sign = bits & 0x8000_0000;
    let a = bits & 0x7fff_ffff;
    // normal range: drop 13 mantissa bits with round half to even
    let normal = (a + 0x0fff + ((a >> 13) & 1)) & !0x1fff;
    // subnormal range: adding 0.5 leaves an ulp of 2^-24, the half subnormal spacing
    let subnormal = ((f32::from_bits(a) + 0.5) - 0.5).to_bits();
    let r = if a < 0x3880_0000 { subnormal } else { normal };
    // 65520 and above overflow; NaN passes through
    let r = if a >= 0x477f_f000 { 0x7f80_0000 } else { r };
    let r = if a > 0x7f80_0000 { a } else { r };
    f32::from_bits(r | sign)
}

impl Lane for Half {
    #[inline(always)]
    fn pack(x: f32) -> Self {
        Half(f16::from_f32(x).to_bits())
    }

    #[inline(always)]
    fn widen(self) -> f32 {
        half_to_f32(self.0)
    }

    #[inline(always)]
    fn round(x: f32) -> f32 {
        round_to_half(x)
    }
}

/// `acc + w * x` with the product and the sum each rounded to the lane precision.
#[inline(always)]
fn madd<L: Lane>(acc: f32, w: f32, x: f32) -> f32 {
    L::round(acc + L::round(w * x))
}

struct PackedLevel<L> {
    width: usize,
    height: usize,
    data: Vec<L>,
}

impl<L: Lane> PackedLevel<L> {
    fn pack(level: &super::FeatureLevel) -> Self {
        Self { width: level.width(), height: level.height(), data: level.values().iter().map(|&x| L::pack(x)).collect() }
    }
}

/// One resolved tuple: in-bounds neighbor rows (as offsets into the level) and weights.
#[derive(Clone, Copy)]
struct Staged {
    level: usize,
    count: usize,
    offset: [usize; 4],
    corner: [f32; 4],
    weight: f32,
}

#[derive(Default)]
struct Stage {
    tuples: Vec<Staged>,
}

impl Stage {
    #[inline(always)]
    fn load<L: Lane>(&mut self, levels: &[PackedLevel<L>], channels: usize, tile: &[SampleTuple], total: f32) {
        self.tuples.clear();
        for t in tile {
            let level = &levels[t.level];
            let corners = Corners::new(level.width, level.height, t.u, t.v);
            let mut staged = Staged {
                level: t.level,
                count: corners.count,
                offset: [0; 4],
                corner: [0.0; 4],
                weight: L::round(t.weight / total),
            };
            for k in 0..corners.count {
                staged.corner[k] = L::round(corners.weight[k]);
                staged.offset[k] = corners.cell[k] * channels;
                prefetch(&level.data[staged.offset[k]..staged.offset[k] + channels]);
            }
            self.tuples.push(staged);
        }
    }

    #[inline(always)]
    fn consume<L: Lane>(&self, levels: &[PackedLevel<L>], acc: &mut [f32]) {
        let n = acc.len();
        for t in &self.tuples {
            let data = &levels[t.level].data;
            let row = |k: usize| &data[t.offset[k]..t.offset[k] + n];
            let [w0, w1, w2, w3] = t.corner;
            let wn = t.weight;
            match t.count {
                4 => {
                    let (r0, r1, r2, r3) = (row(0), row(1), row(2), row(3));
                    for c in 0..n {
                        let s = madd::<L>(0.0, w0, r0[c].widen());
                        let s = madd::<L>(s, w1, r1[c].widen());
                        let s = madd::<L>(s, w2, r2[c].widen());
                        let s = madd::<L>(s, w3, r3[c].widen());
                        acc[c] = madd::<L>(acc[c], wn, s);
                    }
                }
                2 => {
                    let (r0, r1) = (row(0), row(1));
                    for c in 0..n {
                        let s = madd::<L>(madd::<L>(0.0, w0, r0[c].widen()), w1, r1[c].widen());
                        acc[c] = madd::<L>(acc[c], wn, s);
                    }
                }
                1 => {
                    let r0 = row(0);
                    for c in 0..n {
                        acc[c] = madd::<L>(acc[c], wn, madd::<L>(0.0, w0, r0[c].widen()));
                    }
                }
                0 => {
                    for a in acc.iter_mut() {
                        *a = madd::<L>(*a, wn, 0.0);
                    }
                }
                _ => {
                    for (c, a) in acc.iter_mut().enumerate() {
                        let s = (0..t.count).fold(0.0, |s, k| madd::<L>(s, t.corner[k], data[t.offset[k] + c].widen()));
                        *a = madd::<L>(*a, wn, s);
                    }
                }
            }
        }
    }
}

/// Hints the cache to fetch every line of `row`; a no-op off x86-64.
#[inline(always)]
fn prefetch<T>(row: &[T]) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        let bytes = std::mem::size_of_val(row);
        let base = row.as_ptr().cast::<i8>();
        for line in (0..bytes).step_by(64) {
            // SAFETY: prefetching is a hint and never faults; the address lies inside `row`.
            unsafe { _mm_prefetch::<_MM_HINT_T0>(base.add(line)) };
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = row;
}

#[derive(Default)]
struct Workspace {
    stages: [Stage; 2],
    tiles: Vec<(usize, usize)>,
}

/// Runs [`aggregate_query`] compiled for AVX2 when the CPU has it. No fused multiply-add is
/// enabled, so both builds perform the same IEEE operations.
fn aggregate_dispatch<L: Lane>(
    pyramids: &[Vec<PackedLevel<L>>],
    index: &PyramidIndex,
    tuples: &[SampleTuple],
    ws: &mut Workspace,
    out: &mut [f32],
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the required target feature was detected at runtime.
        unsafe { aggregate_avx2(pyramids, index, tuples, ws, out) };
        return;
    }
    aggregate_query(pyramids, index, tuples, ws, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn aggregate_avx2<L: Lane>(
    pyramids: &[Vec<PackedLevel<L>>],
    index: &PyramidIndex,
    tuples: &[SampleTuple],
    ws: &mut Workspace,
    out: &mut [f32],
) {
    aggregate_query(pyramids, index, tuples, ws, out)
}

#[inline(always)]
fn aggregate_query<L: Lane>(
    pyramids: &[Vec<PackedLevel<L>>],
    index: &PyramidIndex,
    tuples: &[SampleTuple],
    ws: &mut Workspace,
    out: &mut [f32],
) {
    let sorted = canonical(tuples);
    let total = weight_sum(&sorted);
    ws.tiles.clear();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || (sorted[i].camera_id, sorted[i].level) != (sorted[start].camera_id, sorted[start].level) {
            ws.tiles.push((start, i));
            start = i;
        }
    }
    let channels = out.len();
    let levels_of = |(a, _): (usize, usize)| &pyramids[index.get(sorted[a].camera_id).expect("validated")][..];
    let first = ws.tiles[0];
    ws.stages[0].load(levels_of(first), channels, &sorted[first.0..first.1], total);
    for k in 0..ws.tiles.len() {
        let [even, odd] = &mut ws.stages;
        let (current, next) = if k % 2 == 0 { (&*even, odd) } else { (&*odd, even) };
        if let Some(&tile) = ws.tiles.get(k + 1) {
            next.load(levels_of(tile), channels, &sorted[tile.0..tile.1], total);
        }
        current.consume(levels_of(ws.tiles[k]), out);
    }
}

enum Storage {
    Full(Vec<Vec<PackedLevel<f32>>>),
    Half(Vec<Vec<PackedLevel<Half>>>),
}

/// Pyramids repacked once for repeated optimized aggregation.
pub struct PackedMsda {
    index: PyramidIndex,
    channels: usize,
    storage: Storage,
}

impl PackedMsda {
    pub fn new(pyrs: &[FeaturePyramid], precision: PrecisionMode) -> Result<Self, FeatureError> {
        let index = PyramidIndex::new(pyrs)?;
        let channels = index.channels;
        if channels % 2 != 0 {
            return Err(FeatureError::OddChannelCount(channels));
        }
        let storage = match precision {
            PrecisionMode::Full => {
                Storage::Full(pyrs.iter().map(|p| p.levels().iter().map(PackedLevel::pack).collect()).collect())
            }
            PrecisionMode::PackedHalf => {
                Storage::Half(pyrs.iter().map(|p| p.levels().iter().map(PackedLevel::pack).collect()).collect())
            }
        };
        Ok(Self { index, channels, storage })
    }

    pub fn precision(&self) -> PrecisionMode {
        match self.storage {
            Storage::Full(_) => PrecisionMode::Full,
            Storage::Half(_) => PrecisionMode::PackedHalf,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Aggregates all queries, parallel across queries on the current rayon pool.
    pub fn run(&self, plan: &SamplePlan) -> Result<MsdaOutput, FeatureError> {
        validate_plan(&self.index, plan)?;
        match &self.storage {
            Storage::Full(p) => Ok(self.run_with(p, plan)),
            Storage::Half(p) => Ok(self.run_with(p, plan)),
        }
    }

    fn run_with<L: Lane>(&self, pyramids: &[Vec<PackedLevel<L>>], plan: &SamplePlan) -> MsdaOutput {
        let mut out = MsdaOutput::zeros(plan.len(), self.channels);
        for (flag, q) in out.empty.iter_mut().zip(&plan.queries) {
            *flag = q.is_empty();
        }
        if self.channels == 0 {
            return out;
        }
        out.values.par_chunks_mut(self.channels).zip(plan.queries.par_iter()).for_each_init(
            Workspace::default,
            |ws, (dst, tuples)| {
                if !tuples.is_empty() {
                    aggregate_dispatch(pyramids, &self.index, tuples, ws, dst);
                }
            },
        );
        out
    }
}

/// One-shot optimized aggregation; see [`PackedMsda`] to amortize repacking.
pub fn msda_optimized(pyrs: &[FeaturePyramid], plan: &SamplePlan, precision: PrecisionMode) -> Result<MsdaOutput, FeatureError> {
    PackedMsda::new(pyrs, precision)?.run(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::{msda_reference, FeatureLevel};

    fn pyramids() -> Vec<FeaturePyramid> {
        let level = |h: usize, w: usize, stride: f64, seed: f32| {
            let values = (0..h * w * 6).map(|i| ((i as f32) * 0.71 + seed).cos()).collect();
            FeatureLevel::new(h, w, 6, stride, values).unwrap()
        };
        vec![
            FeaturePyramid::new(0, vec![level(5, 7, 4.0, 0.5), level(3, 4, 8.0, 1.5)]).unwrap(),
            FeaturePyramid::new(1, vec![level(5, 7, 4.0, 2.5), level(3, 4, 8.0, 3.5)]).unwrap(),
        ]
    }

    fn plan() -> SamplePlan {
        let t = |camera_id, level, u, v, weight| SampleTuple { camera_id, level, u, v, weight };
        SamplePlan::new(vec![
            vec![t(1, 0, 2.3, 1.7, 0.4), t(0, 1, -0.6, 2.2, 0.1), t(0, 0, 6.5, 4.5, 0.9), t(1, 1, 3.0, 0.0, 0.2)],
            vec![],
            vec![t(0, 0, 3.0, 3.0, 1.0)],
            vec![t(1, 0, -9.0, 2.0, 0.5), t(1, 0, 1.25, 0.75, 0.5)],
        ])
    }

    #[test]
    fn full_mode_is_bit_identical_to_reference() {
        let p = pyramids();
        let r = msda_reference(&p, &plan()).unwrap();
        let o = msda_optimized(&p, &plan(), PrecisionMode::Full).unwrap();
        assert_eq!(r.empty, o.empty);
        let rb: Vec<u32> = r.values.iter().map(|v| v.to_bits()).collect();
        let ob: Vec<u32> = o.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(rb, ob);
    }

    #[test]
    fn half_mode_stays_close() {
        let p = pyramids();
        let r = msda_reference(&p, &plan()).unwrap();
        let o = msda_optimized(&p, &plan(), PrecisionMode::PackedHalf).unwrap();
        assert_eq!(o.empty, vec![false, true, false, false]);
        for (a, b) in r.values.iter().zip(&o.values) {
            assert!((a - b).abs() <= 2e-2, "{a} vs {b}");
        }
        assert_eq!(o.query(1), &[0.0; 6]);
    }

    #[test]
    fn half_conversions_match_the_half_crate() {
        for h in 0..=u16::MAX {
            let want = f16::from_bits(h).to_f32();
            let got = half_to_f32(h);
            assert!(got.to_bits() == want.to_bits() || got.is_nan() && want.is_nan(), "{h:#x}");
        }
        let mut x = 0x1234_5678u32;
        for _ in 0..1_000_000 {
            // xorshift over raw bit patterns covers every exponent
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            let v = f32::from_bits(x);
            let want = f16::from_f32(v).to_f32();
            let got = round_to_half(v);
            assert!(got.to_bits() == want.to_bits() || got.is_nan() && want.is_nan(), "{v:e}: {got:e} vs {want:e}");
        }
        for v in [65504.0f32, 65519.99, 65520.0, -65520.0, 6.1035156e-5, 6.1035153e-5, 2.9802322e-8, 2.9802326e-8, 0.0, -0.0] {
            assert_eq!(round_to_half(v).to_bits(), f16::from_f32(v).to_f32().to_bits(), "{v:e}");
        }
    }

    #[test]
    fn precision_mode_wire_names() {
        assert_eq!(serde_json::to_string(&PrecisionMode::PackedHalf).unwrap(), "\"packed_half\"");
        assert_eq!(serde_json::from_str::<PrecisionMode>("\"half\"").unwrap(), PrecisionMode::PackedHalf);
        assert_eq!(serde_json::from_str::<PrecisionMode>("\"full\"").unwrap(), PrecisionMode::Full);
    }

    #[test]
    fn errors_match_reference() {
        let p = pyramids();
        let bad = SamplePlan::new(vec![vec![SampleTuple { camera_id: 5, level: 0, u: 0.0, v: 0.0, weight: 1.0 }]]);
        assert_eq!(msda_optimized(&p, &bad, PrecisionMode::Full).unwrap_err(), msda_reference(&p, &bad).unwrap_err());
    }
}
