//! Reconstruction loss terms evaluated on caller-supplied renders and
//! Gaussian means.

mod kdtree;
mod nn;
mod ssim;

use serde::{Deserialize, Serialize};

pub use kdtree::KdTree;
pub use nn::{nn_loss, nn_loss_grad, NnCache, REFRESH_PERIOD};
pub use ssim::{gaussian_taps, l1, loss_3dgs, ssim, Channels};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, SemanticMap};
use crate::scene::SemanticId;

/// Default weight of the structural term in the photometric loss.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Per-pixel supervision flag for the depth loss.
pub type SupervisionMask = Image<bool>;

/// Supervise walls, floors and ceilings only. Openings such as windows,
/// doors and mirrors, and all objects, are excluded.
pub fn mask_from_semantics(sem: &SemanticMap) -> SupervisionMask {
    sem.map(|s| matches!(s, SemanticId::WALL | SemanticId::FLOOR | SemanticId::CEILING))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedDepthLoss {
    pub value: f64,
    pub masked_pixels: usize,
    /// The mask selected no pixel; `value` is then 0.
    pub empty_mask: bool,
}

/// Mean absolute depth error over the masked pixels.
pub fn masked_depth_loss(d_rd: &DepthMap, d_gt: &DepthMap, mask: &SupervisionMask) -> Result<MaskedDepthLoss> {
    if !d_rd.same_shape(d_gt) || !d_rd.same_shape(mask) {
        return Err(Error::ShapeMismatch(format!(
            "rendered {:?}, proxy {:?}, mask {:?}",
            d_rd.dims(),
            d_gt.dims(),
            mask.dims()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((a, b), &m) in d_rd.pixels().iter().zip(d_gt.pixels()).zip(mask.pixels()) {
        if m {
            sum += (b - a).abs();
            n += 1;
        }
    }
    Ok(MaskedDepthLoss {
        value: if n == 0 { 0.0 } else { sum / n as f64 },
        masked_pixels: n,
        empty_mask: n == 0,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossParts {
    pub l_3dgs: f64,
    /// Geometric term computed elsewhere; absent counts as 0.
    #[serde(default)]
    pub l_geom: Option<f64>,
    pub l_nn: f64,
    pub l_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub value: f64,
    pub geom_missing: bool,
}

/// Unweighted sum of the four terms.
pub fn total_loss(parts: &LossParts) -> TotalLoss {
    TotalLoss {
        value: parts.l_3dgs + parts.l_geom.unwrap_or(0.0) + parts.l_nn + parts.l_depth,
        geom_missing: parts.l_geom.is_none(),
    }
}
