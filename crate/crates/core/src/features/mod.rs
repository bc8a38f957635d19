//! Frame-level feature ingestion, PCA reduction, two-stream fusion and
//! optical-flow based estimation of the fusion ratio.

mod flow;
mod fusion;
mod pca;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{
    estimate_ratio, flow_frame_average, flow_frame_average_real, FlowEncoding, FlowStats,
    RatioMode,
};
pub use fusion::{fuse, FusionConfig};
pub use pca::{pca_fit, PcaModel};

/// Which network stream a feature sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Temporal,
    Spatial,
    Fused,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Temporal => "temporal",
            Stream::Spatial => "spatial",
            Stream::Fused => "fused",
        }
    }
}

/// One video as an ordered list of frame feature vectors.
///
/// `frames` is `num_frames x dim`, one row per extracted feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub label: usize,
    pub stream: Stream,
    /// Frames between consecutive features.
    pub frame_stride: u32,
    /// Stacked flow frames per temporal feature. Metadata only.
    pub stack_depth: u32,
    frames: Array2<f32>,
}

impl FeatureSequence {
    pub const DEFAULT_FRAME_STRIDE: u32 = 5;
    pub const DEFAULT_STACK_DEPTH: u32 = 10;

    pub fn new(
        video_id: impl Into<String>,
        label: usize,
        stream: Stream,
        frames: Array2<f32>,
    ) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if frames.ncols() == 0 {
            return Err(Error::ShapeMismatch("frame dimension must be at least 1".into()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            video_id: video_id.into(),
            label,
            stream,
            frame_stride: Self::DEFAULT_FRAME_STRIDE,
            stack_depth: Self::DEFAULT_STACK_DEPTH,
            frames,
        })
    }

    pub fn frames(&self) -> &Array2<f32> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}
