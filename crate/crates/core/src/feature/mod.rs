//! Multi-scale feature pyramids and deformable aggregation.
//!
//! Coordinate convention: sampling coordinates are in cells, with cell `(i, j)` centered at
//! integer coordinates `(i, j)`. Cell `i` of a level with stride `s` covers source pixels
//! `[i*s, (i+1)*s)`, so a pixel coordinate `p` maps to cell coordinate `p/s - 0.5`
//! ([`pixel_to_cell`]). Samples outside the grid read zeros.

mod bench;
mod msda;
mod packed;
mod pyramid;

pub use bench::{host_description, run_bench, BenchReport, BenchWorkload, LevelShape, PathTiming};
pub use msda::{msda_reference, MsdaOutput, SamplePlan, SampleTuple};
pub use packed::{msda_optimized, PackedMsda, PrecisionMode};
pub use pyramid::{bilinear_sample, pixel_to_cell, FeatureLevel, FeaturePyramid};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("channel count {0} is odd; packed-pair storage needs an even count")]
    OddChannelCount(usize),
    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("level shape {height}x{width}x{channels} does not match {len} values")]
    ShapeMismatch { height: usize, width: usize, channels: usize, len: usize },
    #[error("level strides must strictly increase (level {level})")]
    NonIncreasingStride { level: usize },
    #[error("pyramid has no levels")]
    NoLevels,
    #[error("duplicate pyramid for camera {0}")]
    DuplicateCamera(u32),
    #[error("plan references unknown camera {0}")]
    UnknownCamera(u32),
    #[error("plan references level {level} but camera {camera} has {available}")]
    LevelOutOfRange { camera: u32, level: usize, available: usize },
    #[error("query {query} sample {sample} has non-finite weight")]
    NonFiniteWeight { query: usize, sample: usize },
    #[error("query {query} sample {sample} has negative weight {weight}")]
    NegativeWeight { query: usize, sample: usize, weight: f32 },
    #[error("query {query} has non-empty plan with zero total weight")]
    ZeroWeightSum { query: usize },
}
