//! Occlusion masks, flow consistency weights, guidance decomposition and
//! residual edge masks. Nothing here is differentiated through.

use serde::{Deserialize, Serialize};

use super::{backward_warp, PlaneSpec};
use crate::tensor::Tensor;
use crate::{Error, Result};

fn single_channel(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let (n, c, h, w) = t.dims4(op)?;
    if n != 1 || c != 1 {
        return Err(Error::Config(format!("{op} expects a (1, 1, H, W) map, got {:?}", t.shape())));
    }
    Ok((h, w))
}

/// Linear lookup along one row, or `None` outside `[0, w - 1]`.
fn sample_row(row: &[f32], x: f32) -> Option<f32> {
    let max = (row.len() - 1) as f32;
    if !(0.0..=max).contains(&x) {
        return None;
    }
    let i0 = x.floor() as usize;
    let i1 = (i0 + 1).min(row.len() - 1);
    let f = x - i0 as f32;
    Some(row[i0] + f * (row[i1] - row[i0]))
}

/// Visibility of each pixel in the opposite view, from guidance disparity
/// maps of the left (`u = -0.5`) and right (`u = +0.5`) views. A pixel is
/// visible (1) when the other view's disparity at its corresponding
/// position agrees within `tol` px; positions that land outside the frame
/// count as occluded (0).
pub fn occlusion_mask_from_guidance(j_left: &Tensor, j_right: &Tensor, tol: f32) -> Result<(Tensor, Tensor)> {
    let (h, w) = single_channel(j_left, "occlusion_mask")?;
    if single_channel(j_right, "occlusion_mask")? != (h, w) {
        return Err(Error::Config("guidance maps differ in size".into()));
    }
    let check = |own: &[f32], other: &[f32], sign: f32| -> Vec<f32> {
        let mut out = vec![0.0f32; h * w];
        for y in 0..h {
            let (own_row, other_row) = (&own[y * w..(y + 1) * w], &other[y * w..(y + 1) * w]);
            for x in 0..w {
                let d = own_row[x];
                let visible = sample_row(other_row, x as f32 + sign * d).is_some_and(|o| (o - d).abs() <= tol);
                out[y * w + x] = if visible { 1.0 } else { 0.0 };
            }
        }
        out
    };
    // left → right moves content by -J, right → left by +J
    let ml = check(j_left.data(), j_right.data(), -1.0);
    let mr = check(j_right.data(), j_left.data(), 1.0);
    Ok((Tensor::from_vec(&[1, 1, h, w], ml)?, Tensor::from_vec(&[1, 1, h, w], mr)?))
}

/// Forward/backward agreement weights `exp(-e / sigma)` with
/// `e(p) = |F(p) + B(p + F(p))|`, for flows of one or two channels.
pub fn consistency_weights(flow_fwd: &Tensor, flow_bwd: &Tensor, sigma: f32) -> Result<Tensor> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("consistency sigma must be positive, got {sigma}")));
    }
    let fwd = flow_fwd.detach();
    let back = backward_warp(&flow_bwd.detach(), &fwd)?;
    let (n, c, h, w) = fwd.dims4("consistency_weights")?;
    if back.shape() != fwd.shape() {
        return Err(Error::Config("flows differ in shape".into()));
    }
    let hw = h * w;
    let mut out = vec![0.0f32; n * hw];
    for b in 0..n {
        for i in 0..hw {
            let mut e2 = 0.0f32;
            for ch in 0..c {
                let k = (b * c + ch) * hw + i;
                let r = fwd.data()[k] + back.data()[k];
                e2 += r * r;
            }
            out[b * hw + i] = (-e2.sqrt() / sigma).exp();
        }
    }
    Ok(Tensor::from_vec(&[n, 1, h, w], out)?)
}

/// Splits a guidance disparity map into per-plane guidance and band masks,
/// both `(1, K, H, W)`. Band masks partition the image.
pub fn decompose_guidance(guidance: &Tensor, spec: &PlaneSpec) -> Result<(Tensor, Tensor)> {
    let (h, w) = single_channel(guidance, "decompose_guidance")?;
    let k = spec.len();
    let hw = h * w;
    let mut values = vec![0.0f32; k * hw];
    let mut masks = vec![0.0f32; k * hw];
    for (i, &g) in guidance.data().iter().enumerate() {
        let plane = (0..k)
            .find(|&p| {
                let (lo, hi) = spec.band(p);
                g >= lo && g < hi
            })
            .ok_or_else(|| Error::OutOfRange(format!("guidance value {g} falls in no band")))?;
        values[plane * hw + i] = g;
        masks[plane * hw + i] = 1.0;
    }
    Ok((Tensor::from_vec(&[1, k, h, w], values)?, Tensor::from_vec(&[1, k, h, w], masks)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgePolarity {
    /// Any sharp horizontal change of the flow.
    #[default]
    Any,
    /// Only steps where the flow decreases left to right, which is where a
    /// backward warp duplicates content into a disoccluded region.
    Contracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMaskConfig {
    /// Minimum |dF/dx| in px per px.
    pub threshold: f32,
    /// Width of the horizontal dilation kernel.
    pub dilate: usize,
    /// Width of the horizontal erosion applied after dilation.
    pub erode: usize,
    pub polarity: EdgePolarity,
}

impl Default for EdgeMaskConfig {
    fn default() -> Self {
        Self { threshold: 0.5, dilate: 7, erode: 3, polarity: EdgePolarity::Any }
    }
}

fn morph_rows(mask: &[f32], h: usize, w: usize, width: usize, dilate: bool) -> Vec<f32> {
    let r = width / 2;
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let row = &mask[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let window = &row[lo..=hi];
            let hit = if dilate { window.iter().any(|&v| v > 0.5) } else { window.iter().all(|&v| v > 0.5) };
            out[y * w + x] = if hit { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Marks pixels near sharp horizontal steps of the x component of `flow`
/// (1 = suspect). Both pixels of a step are flagged, then the mask is
/// dilated and lightly eroded along rows.
pub fn residual_edge_mask(flow: &Tensor, cfg: &EdgeMaskConfig) -> Result<Tensor> {
    let (n, _, h, w) = flow.dims4("residual_edge_mask")?;
    if n != 1 {
        return Err(Error::Config("residual_edge_mask expects a batch of one".into()));
    }
    if cfg.dilate % 2 == 0 || cfg.erode % 2 == 0 || cfg.erode > cfg.dilate {
        return Err(Error::Config(format!("edge mask kernels must be odd with erode <= dilate: {cfg:?}")));
    }
    let fx = &flow.data()[..h * w];
    let mut raw = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let d = fx[y * w + x + 1] - fx[y * w + x];
            let hit = match cfg.polarity {
                EdgePolarity::Any => d.abs() > cfg.threshold,
                EdgePolarity::Contracting => d < -cfg.threshold,
            };
            if hit {
                raw[y * w + x] = 1.0;
                raw[y * w + x + 1] = 1.0;
            }
        }
    }
    let dilated = morph_rows(&raw, h, w, cfg.dilate, true);
    let closed = morph_rows(&dilated, h, w, cfg.erode, false);
    Ok(Tensor::from_vec(&[1, 1, h, w], closed)?)
}

/// Zeroes blending weights where the edge mask is set.
pub fn combine_with_edge_mask(weights: &Tensor, mask: &Tensor) -> Result<Tensor> {
    Ok(weights.detach().mul(&mask.mul_scalar(-1.0).add_scalar(1.0))?)
}
