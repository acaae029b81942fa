//! Disparity planes, Jacobian flows and backward warping.
//!
//! Conventions used throughout:
//!
//! * Stored view Jacobians are non-negative disparity magnitudes in pixels.
//!   A scene point at canonical column `x_c` with disparity `d` appears at
//!   `x_c - d·u` in view `u`, so the horizontal displacement from view
//!   `u_from` to `u_to` is `-(u_to - u_from)·J`.
//! * Time Jacobians are signed (x, y) velocities in pixels per unit of
//!   normalized time; the displacement to time `t_to` is `(t_to - t_from)·J`.
//! * Flows are backward: output pixel `p` samples the source at `p + flow(p)`.

mod blend;
mod masks;

pub use blend::{blend_exact, blend_weighted, normalized_left_weight};
pub use masks::{
    combine_with_edge_mask, consistency_weights, decompose_guidance, occlusion_mask_from_guidance,
    residual_edge_mask, EdgeMaskConfig, EdgePolarity,
};

use serde::{Deserialize, Serialize};

use crate::coords::Branch;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Anchor disparities `d_1 < … < d_K` with uniform gap `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub disparities: Vec<f32>,
    pub gap: f32,
}

impl PlaneSpec {
    pub fn new(disparities: Vec<f32>, gap: f32) -> Result<Self> {
        if disparities.is_empty() {
            return Err(Error::Config("at least one disparity plane is required".into()));
        }
        if disparities[0] != 0.0 {
            return Err(Error::Config("the first plane must sit at disparity 0".into()));
        }
        for pair in disparities.windows(2) {
            if !(pair[1] > pair[0]) || ((pair[1] - pair[0]) - gap).abs() > 1e-4 {
                return Err(Error::Config(format!("planes {disparities:?} are not ascending with gap {gap}")));
            }
        }
        Ok(Self { disparities, gap })
    }

    /// `k` planes starting at 0 whose gap is `ceil(max_disparity / (k-1))`
    /// rounded up to an even integer.
    pub fn for_max_disparity(max_disparity: f32, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("plane count must be positive".into()));
        }
        if k == 1 {
            return Self::new(vec![0.0], max_disparity.max(1.0));
        }
        let raw = (max_disparity / (k - 1) as f32).ceil().max(1.0) as u32;
        let gap = (raw + raw % 2) as f32;
        Self::new((0..k).map(|i| i as f32 * gap).collect(), gap)
    }

    pub fn len(&self) -> usize {
        self.disparities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disparities.is_empty()
    }

    /// Half-open band `[lo, hi)` of plane `k`; the bottom band is open
    /// below and the top band open above.
    pub fn band(&self, k: usize) -> (f32, f32) {
        let d = self.disparities[k];
        let lo = if k == 0 { f32::NEG_INFINITY } else { d - self.gap / 2.0 };
        let hi = if k + 1 == self.len() { f32::INFINITY } else { d + self.gap / 2.0 };
        (lo, hi)
    }
}

/// Per-plane disparity maps plus their anchors.
#[derive(Debug, Clone)]
pub struct MultiPlaneJacobian {
    /// `(1, K, H, W)`.
    pub planes: Tensor,
    pub spec: PlaneSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Pixel-wise maximum over shifted planes.
    #[default]
    Max,
    /// Pixel-wise sum (ablation).
    Sum,
}

/// Column and row index maps of an `h × w` image, each `(1, 1, h, w)`.
pub fn pixel_grid(h: usize, w: usize) -> (Vec<f32>, Vec<f32>) {
    let xs = (0..h * w).map(|i| (i % w) as f32).collect();
    let ys = (0..h * w).map(|i| (i / w) as f32).collect();
    (xs, ys)
}

/// Translates every channel of `plane` horizontally; positive `shift_px`
/// moves content left (`out(x) = in(x + shift)`). Fractional shifts
/// interpolate linearly; columns sampled outside the frame replicate the
/// edge.
pub fn shift_plane(plane: &Tensor, shift_px: f32) -> Result<Tensor> {
    let (n, _, h, w) = plane.dims4("shift_plane")?;
    let (xs, ys) = pixel_grid(h, w);
    let sx: Vec<f32> = xs.iter().map(|x| x + shift_px).collect();
    let rep = |v: Vec<f32>| -> Result<Tensor> { Ok(Tensor::from_vec(&[n, 1, h, w], v.repeat(n))?) };
    let (sx, sy) = (rep(sx)?, rep(ys)?);
    Ok(plane.grid_sample(&sx, &sy)?)
}

/// Shifts plane `k` of `(1, K, H, W)` by `d_k·u` pixels to the left.
pub fn shifted_planes(planes: &Tensor, spec: &PlaneSpec, u: f32) -> Result<Tensor> {
    let (_, k, _, _) = planes.dims4("shifted_planes")?;
    if k != spec.len() {
        return Err(Error::Config(format!("{k} planes but {} anchors", spec.len())));
    }
    if k == 1 && spec.disparities[0] * u == 0.0 {
        return Ok(planes.clone());
    }
    let shifted = (0..k)
        .map(|i| shift_plane(&planes.slice_channels(i, 1)?, spec.disparities[i] * u))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = shifted.iter().collect();
    Ok(Tensor::concat_channels(&refs)?)
}

pub fn merge_planes(shifted: &Tensor, mode: MergeMode) -> Result<Tensor> {
    Ok(match mode {
        MergeMode::Max => shifted.channel_max()?.0,
        MergeMode::Sum => shifted.channel_sum()?,
    })
}

/// Disparity map `(1, 1, H, W)` at view `u` from the multi-plane form.
pub fn reconstruct_jacobian(mp: &MultiPlaneJacobian, u: f32, mode: MergeMode) -> Result<Tensor> {
    merge_planes(&shifted_planes(&mp.planes, &mp.spec, u)?, mode)
}

/// Horizontal displacement `-(u_to - u_from)·J` for a disparity map.
pub fn view_flow(jacobian: &Tensor, u_from: f32, u_to: f32) -> Tensor {
    jacobian.mul_scalar(-(u_to - u_from))
}

/// Displacement `(t_to - t_from)·J` of a two-channel time Jacobian. `J` must
/// be the branch that points in the direction of travel.
pub fn time_flow(jacobian: &Tensor, t_from: f32, t_to: f32, branch: Branch) -> Result<Tensor> {
    let ok = match branch {
        Branch::Next => t_to >= t_from,
        Branch::Prev => t_to <= t_from,
    };
    if !ok {
        return Err(Error::Contract(format!(
            "{branch:?} Jacobian used for a flow from t = {t_from} to t = {t_to}"
        )));
    }
    if jacobian.dims4("time_flow")?.1 != 2 {
        return Err(Error::Config(format!("time Jacobian must have 2 channels, got {:?}", jacobian.shape())));
    }
    Ok(jacobian.mul_scalar(t_to - t_from))
}

/// Samples `image` at `p + flow(p)`. A one-channel flow is horizontal only.
pub fn backward_warp(image: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let (n, _, h, w) = image.dims4("backward_warp")?;
    let (fnb, fc, fh, fw) = flow.dims4("backward_warp")?;
    if (fnb, fh, fw) != (n, h, w) || !(fc == 1 || fc == 2) {
        return Err(Error::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "backward_warp",
            lhs: image.shape().to_vec(),
            rhs: flow.shape().to_vec(),
        }));
    }
    let (xs, ys) = pixel_grid(h, w);
    let base_x = Tensor::from_vec(&[n, 1, h, w], xs.repeat(n))?;
    let base_y = Tensor::from_vec(&[n, 1, h, w], ys.repeat(n))?;
    let (sx, sy) = if fc == 1 {
        (base_x.add(flow)?, base_y)
    } else {
        (base_x.add(&flow.slice_channels(0, 1)?)?, base_y.add(&flow.slice_channels(1, 1)?)?)
    };
    Ok(image.grid_sample(&sx, &sy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f32]) -> Tensor {
        Tensor::from_vec(&[1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn shift_examples() {
        let r = row(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(shift_plane(&r, 0.0).unwrap().data(), r.data());
        assert_eq!(shift_plane(&r, 1.0).unwrap().data(), &[2.0, 3.0, 4.0, 4.0]);
        assert_eq!(shift_plane(&r, -1.0).unwrap().data(), &[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(shift_plane(&r, 0.5).unwrap().data(), &[1.5, 2.5, 3.5, 4.0]);
    }

    #[test]
    fn left_view_moves_far_plane_content_right() {
        // plane at d = 20 seen from u = -0.5 shifts by -10 px
        let spec = PlaneSpec::new(vec![0.0, 20.0], 20.0).unwrap();
        assert_eq!(spec.disparities[1] * -0.5, -10.0);
        let mut p = vec![0.0f32; 2 * 64];
        p[64 + 30] = 1.0;
        let planes = Tensor::from_vec(&[1, 2, 1, 64], p).unwrap();
        let s = shifted_planes(&planes, &spec, -0.5).unwrap();
        assert_eq!(s.data()[64 + 40], 1.0);
    }

    fn block_planes() -> MultiPlaneJacobian {
        let w = 100;
        let mut data = vec![0.0f32; 2 * w];
        for x in 40..50 {
            data[w + x] = 22.0;
        }
        MultiPlaneJacobian {
            planes: Tensor::from_vec(&[1, 2, 1, w], data).unwrap(),
            spec: PlaneSpec::new(vec![0.0, 20.0], 20.0).unwrap(),
        }
    }

    #[test]
    fn reconstruct_moves_blocks_by_anchor_shift() {
        let mp = block_planes();
        let right = reconstruct_jacobian(&mp, 0.5, MergeMode::Max).unwrap();
        let left = reconstruct_jacobian(&mp, -0.5, MergeMode::Max).unwrap();
        for x in 0..100 {
            let r = if (30..40).contains(&x) { 22.0 } else { 0.0 };
            let l = if (50..60).contains(&x) { 22.0 } else { 0.0 };
            assert_eq!(right.data()[x], r, "right x={x}");
            assert_eq!(left.data()[x], l, "left x={x}");
        }
        let centre = reconstruct_jacobian(&mp, 0.0, MergeMode::Max).unwrap();
        assert_eq!(centre.data(), mp.planes.channel_max().unwrap().0.data());
    }

    #[test]
    fn view_flow_examples() {
        let j = Tensor::full(&[1, 1, 2, 2], 20.0);
        assert!(view_flow(&j, 0.3, 0.3).data().iter().all(|&v| v == 0.0));
        assert!(view_flow(&j, -0.5, 0.5).data().iter().all(|&v| v == -20.0));
        assert!(view_flow(&j, -0.5, 0.0).data().iter().all(|&v| v == -10.0));
    }

    #[test]
    fn time_flow_direction_contract() {
        let j = Tensor::full(&[1, 2, 2, 2], 3.0);
        assert!(time_flow(&j, 0.5, 0.5, Branch::Next).unwrap().data().iter().all(|&v| v == 0.0));
        let f = time_flow(&j, 0.25, 0.375, Branch::Next).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.375));
        assert!(matches!(time_flow(&j, 0.5, 0.25, Branch::Next), Err(Error::Contract(_))));
        assert!(matches!(time_flow(&j, 0.25, 0.5, Branch::Prev), Err(Error::Contract(_))));
    }

    #[test]
    fn warp_identity_and_translation() {
        let img = Tensor::from_vec(&[1, 1, 2, 4], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let zero = Tensor::zeros(&[1, 1, 2, 4]);
        assert_eq!(backward_warp(&img, &zero).unwrap().data(), img.data());
        let flow = Tensor::full(&[1, 2, 2, 4], 0.0);
        assert_eq!(backward_warp(&img, &flow).unwrap().data(), img.data());
        // sampling one pixel to the left moves the edge one pixel right
        let shifted = backward_warp(&img, &Tensor::full(&[1, 1, 2, 4], -1.0)).unwrap();
        assert_eq!(&shifted.data()[..4], &[0.0, 0.0, 0.0, 1.0]);
        assert!(backward_warp(&img, &Tensor::zeros(&[1, 1, 2, 3])).is_err());
    }

    #[test]
    fn plane_spec_defaults() {
        let s = PlaneSpec::for_max_disparity(24.0, 6).unwrap();
        assert_eq!(s.disparities, vec![0.0, 6.0, 12.0, 18.0, 24.0, 30.0]);
        let s = PlaneSpec::for_max_disparity(48.0, 6).unwrap();
        assert_eq!(s.gap, 10.0);
        let s = PlaneSpec::for_max_disparity(40.0, 3).unwrap();
        assert_eq!(s.disparities, vec![0.0, 20.0, 40.0]);
        assert!(PlaneSpec::new(vec![0.0, 5.0, 7.0], 5.0).is_err());
        assert!(PlaneSpec::new(vec![1.0], 5.0).is_err());
    }

    proptest! {
        #[test]
        fn shifts_compose_away_from_borders(a in -4.0f32..4.0, b in -4.0f32..4.0, seed in 0u64..1000) {
            let w = 48;
            let vals: Vec<f32> = (0..w).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f32 / 97.0).collect();
            let r = row(&vals);
            // integer shifts compose exactly
            let (ai, bi) = (a.round(), b.round());
            let two = shift_plane(&shift_plane(&r, ai).unwrap(), bi).unwrap();
            let one = shift_plane(&r, ai + bi).unwrap();
            let border = ai.abs().max(bi.abs()) as usize + (ai + bi).abs() as usize + 1;
            for x in border..w - border {
                prop_assert_eq!(two.data()[x], one.data()[x]);
            }
        }
    }
}
