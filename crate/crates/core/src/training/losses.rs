use super::{TimeModel, ViewModel, ViewVariant};
use crate::coords::{frame_spacing, frame_time, Branch};
use crate::geometry::{backward_warp, blend_weighted, consistency_weights, decompose_guidance, time_flow, view_flow, PlaneSpec};
use crate::scenegen::{SceneBundle, Side};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Weighted loss components of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossTerms {
    pub appearance: f32,
    pub jacobian: f32,
    pub plane: f32,
}

impl LossTerms {
    pub fn total(&self) -> f32 {
        self.appearance + self.jacobian + self.plane
    }
}

struct ViewSample {
    occlusion: Tensor,
    guidance: Tensor,
    plane_values: Vec<Tensor>,
    plane_masks: Vec<Tensor>,
}

/// Per-sample supervision for view optimization, derived once from a
/// bundle and a plane layout.
pub struct ViewTargets {
    frames: [Vec<Tensor>; 2],
    samples: [Vec<ViewSample>; 2],
    pub width: usize,
}

impl ViewTargets {
    pub fn new(bundle: &SceneBundle, planes: &PlaneSpec) -> Result<Self> {
        let n = bundle.scene.frames;
        let mut samples: [Vec<ViewSample>; 2] = Default::default();
        for side in Side::BOTH {
            let s = side.index();
            if bundle.frames[s].len() != n || bundle.disparity[s].len() != n || bundle.occlusion[s].len() != n {
                return Err(Error::MissingGuidance(format!("view {} lacks per-frame guidance", side.letter())));
            }
            for i in 0..n {
                let guidance = bundle.disparity[s][i].clone();
                let (values, masks) = decompose_guidance(&guidance, planes)?;
                samples[s].push(ViewSample {
                    occlusion: bundle.occlusion[s][i].repeat_channels(3)?,
                    guidance,
                    plane_values: (0..planes.len()).map(|k| values.slice_channels(k, 1)).collect::<std::result::Result<_, _>>()?,
                    plane_masks: (0..planes.len()).map(|k| masks.slice_channels(k, 1)).collect::<std::result::Result<_, _>>()?,
                });
            }
        }
        Ok(Self { frames: bundle.frames.clone(), samples, width: bundle.scene.width })
    }

    pub fn frames(&self) -> usize {
        self.frames[0].len()
    }
}

/// View objective at an observed frame: warp the opposite view with the
/// reconstructed disparity, supervise the merged disparity, and pull each
/// shifted plane towards its band of the guidance.
pub fn view_loss(
    model: &ViewModel,
    leaves: &[Tensor],
    targets: &ViewTargets,
    side: Side,
    frame: usize,
    lambda: f32,
    gamma: f32,
) -> Result<(Tensor, LossTerms)> {
    let n = targets.frames();
    let sample = targets.samples[side.index()]
        .get(frame)
        .ok_or_else(|| Error::MissingGuidance(format!("no view guidance for frame {frame} of {n}")))?;
    let v: &ViewVariant = &model.variant;
    let (u, t) = (side.u(), frame_time(frame, n));
    let (shifted, merged) = model.reconstruct(leaves, u, t)?;
    let source = &targets.frames[side.opposite().index()][frame];
    let target = &targets.frames[side.index()][frame];
    let warped = backward_warp(source, &view_flow(&merged, u, -u))?;
    let mask = v.occlusion_mask.then_some(&sample.occlusion);
    let mut total = warped.sub(target)?.mean_abs(mask)?;
    let mut terms = LossTerms { appearance: total.item(), ..Default::default() };
    if v.jacobian_supervision && lambda > 0.0 {
        let jac = merged.sub(&sample.guidance)?.mean_abs(None)?.mul_scalar(lambda);
        terms.jacobian = jac.item();
        total = total.add(&jac)?;
    }
    if v.plane_regularization && gamma > 0.0 {
        let mut plane = Tensor::scalar(0.0);
        for k in 0..model.planes.len() {
            let mask = v.plane_masks.then_some(&sample.plane_masks[k]);
            plane = plane.add(&shifted.slice_channels(k, 1)?.sub(&sample.plane_values[k])?.mean_abs(mask)?)?;
        }
        let plane = plane.mul_scalar(gamma);
        terms.plane = plane.item();
        total = total.add(&plane)?;
    }
    Ok((total, terms))
}

/// Per-frame supervision for one view's time optimization.
pub struct TimeTargets {
    frames: Vec<Tensor>,
    next: Vec<Option<Tensor>>,
    prev: Vec<Option<Tensor>>,
    /// Blending weights of the previous and next frame when reconstructing
    /// frame `i`, from the round trip of the guidance flows.
    weights: Vec<Option<(Tensor, Tensor)>>,
}

impl TimeTargets {
    pub fn new(bundle: &SceneBundle, side: Side) -> Result<Self> {
        let s = side.index();
        let n = bundle.scene.frames;
        let delta = frame_spacing(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            if i == 0 || i + 1 == n {
                weights.push(None);
                continue;
            }
            let to_prev = bundle.flow(side, i, Branch::Prev)?.mul_scalar(-delta);
            let prev_to = bundle.flow(side, i - 1, Branch::Next)?.mul_scalar(delta);
            let to_next = bundle.flow(side, i, Branch::Next)?.mul_scalar(delta);
            let next_to = bundle.flow(side, i + 1, Branch::Prev)?.mul_scalar(-delta);
            weights.push(Some((consistency_weights(&to_prev, &prev_to, 1.0)?, consistency_weights(&to_next, &next_to, 1.0)?)));
        }
        Ok(Self {
            frames: bundle.frames[s].clone(),
            next: bundle.flow_next[s].clone(),
            prev: bundle.flow_prev[s].clone(),
            weights,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }
}

/// Time objective at an interior frame: rebuild it from its neighbours with
/// the two Jacobian branches and supervise both branches.
pub fn time_loss(
    model: &TimeModel,
    leaves: &[Tensor],
    targets: &TimeTargets,
    frame: usize,
    lambda: f32,
) -> Result<(Tensor, LossTerms)> {
    let n = targets.frames();
    if frame == 0 || frame + 1 >= n {
        return Err(Error::OutOfRange(format!("time loss needs an interior frame, got {frame} of {n}")));
    }
    let missing = || Error::MissingGuidance(format!("flow guidance for frame {frame}"));
    let (w_prev, w_next) = targets.weights[frame].as_ref().ok_or_else(missing)?;
    let guide_next = targets.next[frame].as_ref().ok_or_else(missing)?;
    let guide_prev = targets.prev[frame].as_ref().ok_or_else(missing)?;
    let t = frame_time(frame, n);
    let (ja, jb) = model.branches(leaves, t)?;
    let from_prev = backward_warp(&targets.frames[frame - 1], &time_flow(&jb, t, frame_time(frame - 1, n), Branch::Prev)?)?;
    let from_next = backward_warp(&targets.frames[frame + 1], &time_flow(&ja, t, frame_time(frame + 1, n), Branch::Next)?)?;
    let recon = blend_weighted(&from_prev, &from_next, w_prev, w_next, 0.5)?;
    let appearance = recon.sub(&targets.frames[frame])?.mean_abs(None)?;
    let mut terms = LossTerms { appearance: appearance.item(), ..Default::default() };
    let mut total = appearance;
    if lambda > 0.0 {
        let jac = ja.sub(guide_next)?.mean_abs(None)?.add(&jb.sub(guide_prev)?.mean_abs(None)?)?.mul_scalar(lambda);
        terms.jacobian = jac.item();
        total = total.add(&jac)?;
    }
    Ok((total, terms))
}
