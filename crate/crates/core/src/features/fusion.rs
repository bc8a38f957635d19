use ndarray::{concatenate, Array1, ArrayView1, Axis};

use super::PcaModel;
use crate::error::{Error, Result};

/// How much of the fused vector comes from the temporal stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    ratio: f64,
    fused_dim: usize,
}

impl FusionConfig {
    pub fn new(ratio: f64, fused_dim: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::BadConfig(format!("data ratio {ratio} outside [0, 1]")));
        }
        if fused_dim == 0 {
            return Err(Error::BadConfig("fused dimension must be at least 1".into()));
        }
        Ok(Self { ratio, fused_dim })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn fused_dim(&self) -> usize {
        self.fused_dim
    }

    /// `(temporal, spatial)` coordinate counts. The temporal share is
    /// `round(r * D')`; the spatial stream takes the remainder.
    pub fn split(&self) -> (usize, usize) {
        let temporal = (self.ratio * self.fused_dim as f64).round() as usize;
        let temporal = temporal.min(self.fused_dim);
        (temporal, self.fused_dim - temporal)
    }
}

/// Projects each stream with its own PCA, then concatenates the leading
/// temporal coordinates followed by the leading spatial coordinates.
pub fn fuse(
    temporal: ArrayView1<'_, f64>,
    spatial: ArrayView1<'_, f64>,
    cfg: &FusionConfig,
    pca_temporal: &PcaModel,
    pca_spatial: &PcaModel,
) -> Result<Array1<f64>> {
    let (n_t, n_s) = cfg.split();
    if pca_temporal.num_components() < n_t {
        return Err(Error::InsufficientComponents {
            stream: "temporal",
            needed: n_t,
            available: pca_temporal.num_components(),
        });
    }
    if pca_spatial.num_components() < n_s {
        return Err(Error::InsufficientComponents {
            stream: "spatial",
            needed: n_s,
            available: pca_spatial.num_components(),
        });
    }
    let t = pca_temporal.project_leading(temporal, n_t)?;
    let s = pca_spatial.project_leading(spatial, n_s)?;
    Ok(concatenate(Axis(0), &[t.view(), s.view()]).expect("1-d concat"))
}
