use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// How optical-flow values are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEncoding {
    /// 8-bit images with zero motion at 128.
    Offset128,
    /// Real-valued flow already centred at zero.
    Centered,
}

/// Mean absolute flow over both axes of one frame, for 8-bit flow images.
pub fn flow_frame_average(u: ArrayView2<'_, u8>, v: ArrayView2<'_, u8>) -> Result<f64> {
    check_shapes(u.dim(), v.dim())?;
    let p = u.len() as f64;
    let mean_abs = |g: ArrayView2<'_, u8>| {
        g.iter().map(|&x| (f64::from(x) - 128.0).abs()).sum::<f64>() / p
    };
    Ok(0.5 * (mean_abs(u) + mean_abs(v)))
}

/// As [`flow_frame_average`], for real-valued flow fields.
pub fn flow_frame_average_real(
    u: ArrayView2<'_, f32>,
    v: ArrayView2<'_, f32>,
    encoding: FlowEncoding,
) -> Result<f64> {
    check_shapes(u.dim(), v.dim())?;
    let offset = match encoding {
        FlowEncoding::Offset128 => 128.0,
        FlowEncoding::Centered => 0.0,
    };
    let p = u.len() as f64;
    let mean_abs = |g: ArrayView2<'_, f32>| {
        g.iter().map(|&x| (f64::from(x) - offset).abs()).sum::<f64>() / p
    };
    Ok(0.5 * (mean_abs(u) + mean_abs(v)))
}

fn check_shapes(u: (usize, usize), v: (usize, usize)) -> Result<()> {
    if u != v {
        return Err(Error::ShapeMismatch(format!("u is {u:?}, v is {v:?}")));
    }
    if u.0 * u.1 == 0 {
        return Err(Error::ShapeMismatch("flow grid has no pixels".into()));
    }
    Ok(())
}

/// Corpus-wide per-frame flow averages with their overall mean and the mean
/// of the frames at or below it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    per_frame_avg: Vec<f64>,
    mu_all: f64,
    mu_under: f64,
}

impl FlowStats {
    pub fn from_frames(per_frame_avg: Vec<f64>) -> Result<Self> {
        if per_frame_avg.is_empty() {
            return Err(Error::EmptyStats);
        }
        if per_frame_avg.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::NonFiniteInput);
        }
        let mu_all = shifted_mean(&per_frame_avg);
        let under: Vec<f64> = per_frame_avg.iter().copied().filter(|&f| f <= mu_all).collect();
        // The minimum never exceeds the mean.
        assert!(!under.is_empty());
        let mu_under = shifted_mean(&under);
        Ok(Self {
            per_frame_avg,
            mu_all,
            mu_under,
        })
    }

    pub fn per_frame_avg(&self) -> &[f64] {
        &self.per_frame_avg
    }

    pub fn mu_all(&self) -> f64 {
        self.mu_all
    }

    pub fn mu_under(&self) -> f64 {
        self.mu_under
    }

    pub fn len(&self) -> usize {
        self.per_frame_avg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_frame_avg.is_empty()
    }
}

/// Mean computed as `min + mean(x - min)` over the sorted values: exact when
/// all values are equal and independent of input order.
fn shifted_mean(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    min + sorted.iter().map(|x| x - min).sum::<f64>() / sorted.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioMode {
    MuUnder,
    HalfMuUnder,
}

impl RatioMode {
    pub fn threshold(self, stats: &FlowStats) -> f64 {
        match self {
            RatioMode::MuUnder => stats.mu_under,
            RatioMode::HalfMuUnder => stats.mu_under / 2.0,
        }
    }
}

/// Fraction of frames whose average flow is strictly above the threshold.
pub fn estimate_ratio(stats: &FlowStats, mode: RatioMode) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::EmptyStats);
    }
    let threshold = mode.threshold(stats);
    let above = stats.per_frame_avg.iter().filter(|&&f| f > threshold).count();
    Ok(above as f64 / stats.len() as f64)
}
