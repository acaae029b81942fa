//! Two-stage view-time rendering from trained networks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coords::{frame_time, non_uniform_render_tau, Branch, LEFT_U, RIGHT_U};
use crate::decoder::{blender_input, Blender};
use crate::geometry::{
    backward_warp, blend_exact, combine_with_edge_mask, consistency_weights, residual_edge_mask, time_flow, view_flow,
    EdgeMaskConfig, EdgePolarity,
};
use crate::scenegen::Side;
use crate::tensor::Tensor;
use crate::training::{SavedModel, TimeMode, TimeModel, ViewModel};
use crate::{Error, Result};

/// Round-trip error scale of the consistency weights, in pixels.
pub const CONSISTENCY_SIGMA: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    Learned,
    #[default]
    Consistency,
}

impl std::str::FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(BlendMode::Learned),
            "consistency" => Ok(BlendMode::Consistency),
            _ => Err(Error::Config(format!("unknown blend mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub u: f32,
    pub t: f32,
    pub blend: BlendMode,
}

impl RenderRequest {
    pub fn new(u: f32, t: f32, blend: BlendMode) -> Result<Self> {
        if !(LEFT_U..=RIGHT_U).contains(&u) || !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(format!("render request (u={u}, t={t}) outside [-0.5, 0.5] x [0, 1]")));
        }
        Ok(Self { u, t, blend })
    }
}

fn edge_config() -> EdgeMaskConfig {
    EdgeMaskConfig { polarity: EdgePolarity::Contracting, ..Default::default() }
}

/// Disparity maps driving one view synthesis: at the target view and at
/// the two source views.
#[derive(Debug, Clone)]
pub struct ViewJacobians {
    pub target: Tensor,
    pub left: Tensor,
    pub right: Tensor,
}

impl ViewJacobians {
    pub fn from_model(view: &ViewModel, u: f32, t: f32) -> Result<Self> {
        Ok(Self { target: view.jacobian(u, t)?, left: view.jacobian(LEFT_U, t)?, right: view.jacobian(RIGHT_U, t)? })
    }
}

/// Warps both sources to view `u` and blends them.
pub fn synthesize_view(
    j: &ViewJacobians,
    left: &Tensor,
    right: &Tensor,
    u: f32,
    mode: BlendMode,
    blender: Option<&Blender>,
) -> Result<Tensor> {
    let to_left = view_flow(&j.target, u, LEFT_U);
    let to_right = view_flow(&j.target, u, RIGHT_U);
    let warped_l = backward_warp(left, &to_left)?;
    let warped_r = backward_warp(right, &to_right)?;
    let (wl, wr) = match mode {
        BlendMode::Consistency => (
            consistency_weights(&to_left, &view_flow(&j.left, LEFT_U, u), CONSISTENCY_SIGMA)?,
            consistency_weights(&to_right, &view_flow(&j.right, RIGHT_U, u), CONSISTENCY_SIGMA)?,
        ),
        BlendMode::Learned => {
            let net = blender.ok_or_else(|| Error::Config("learned blending needs a blender checkpoint".into()))?;
            let wl = net.run(&blender_input(left, right, &warped_l, &warped_r, &to_left, &to_right)?)?;
            let wr = wl.mul_scalar(-1.0).add_scalar(1.0);
            (wl, wr)
        }
    };
    let wl = combine_with_edge_mask(&wl, &residual_edge_mask(&to_left, &edge_config())?)?;
    let wr = combine_with_edge_mask(&wr, &residual_edge_mask(&to_right, &edge_config())?)?;
    blend_exact(&warped_l, &warped_r, &wl, &wr, u - LEFT_U)
}

/// Synthesizes view `u` at time `t` from a left and right image observed
/// (or time-synthesized) at `t`.
pub fn render_view(
    view: &ViewModel,
    left: &Tensor,
    right: &Tensor,
    u: f32,
    t: f32,
    mode: BlendMode,
    blender: Option<&Blender>,
) -> Result<Tensor> {
    RenderRequest::new(u, t, mode)?;
    synthesize_view(&ViewJacobians::from_model(view, u, t)?, left, right, u, mode, blender)
}

/// Observed interval holding `t` and the position inside it.
pub fn time_interval(t: f32, frames: usize) -> Result<(usize, f32)> {
    if frames < 2 {
        return Err(Error::Config(format!("time rendering needs at least 2 frames, got {frames}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("t = {t} outside [0, 1]")));
    }
    let x = t * (frames - 1) as f32;
    let i = ((x + 1e-6).floor() as usize).min(frames - 2);
    Ok((i, (x - i as f32).clamp(0.0, 1.0)))
}

/// Synthesizes one view at time `t` from its two neighbouring frames.
pub fn render_time(model: &TimeModel, frames: &[Tensor], t: f32) -> Result<Tensor> {
    if frames.len() != model.frames {
        return Err(Error::Config(format!("time network expects {} frames, got {}", model.frames, frames.len())));
    }
    let (i, c) = time_interval(t, frames.len())?;
    let n = frames.len();
    let (t0, t1) = (frame_time(i, n), frame_time(i + 1, n));
    let leaves = model.decoder.params().bind(false)?;
    let (ja, jb) = match model.mode {
        TimeMode::NonUniform => {
            let j = model.query(&leaves, non_uniform_render_tau(t0, c, model.delta(), &model.encoding))?;
            (j.clone(), j)
        }
        _ => model.branches(&leaves, t)?,
    };
    let to_prev = time_flow(&jb, t, t0, Branch::Prev)?;
    let to_next = time_flow(&ja, t, t1, Branch::Next)?;
    let from_prev = time_flow(&model.branch(&leaves, t0, Branch::Next)?, t0, t, Branch::Next)?;
    let from_next = time_flow(&model.branch(&leaves, t1, Branch::Prev)?, t1, t, Branch::Prev)?;
    let w0 = consistency_weights(&to_prev, &from_prev, CONSISTENCY_SIGMA)?;
    let w1 = consistency_weights(&to_next, &from_next, CONSISTENCY_SIGMA)?;
    let a = backward_warp(&frames[i], &to_prev)?;
    let b = backward_warp(&frames[i + 1], &to_next)?;
    blend_exact(&a, &b, &w0, &w1, c)
}

/// The three per-scene networks plus an optional learned blender.
#[derive(Debug, Clone)]
pub struct Renderer {
    pub view: ViewModel,
    pub time: [TimeModel; 2],
    pub blender: Option<Blender>,
}

impl Renderer {
    pub fn new(view: ViewModel, time_left: TimeModel, time_right: TimeModel, blender: Option<Blender>) -> Result<Self> {
        if time_left.side != Side::Left || time_right.side != Side::Right {
            return Err(Error::Config("time networks must be given as (left, right)".into()));
        }
        if time_left.frames != time_right.frames {
            return Err(Error::Config("time networks disagree on the frame count".into()));
        }
        Ok(Self { view, time: [time_left, time_right], blender })
    }

    pub fn load(view: &Path, time_left: &Path, time_right: &Path, blender: Option<&Path>) -> Result<Self> {
        let blender = blender.map(|p| SavedModel::load(p)?.into_blender()).transpose()?;
        Self::new(
            SavedModel::load(view)?.into_view()?,
            SavedModel::load(time_left)?.into_time()?,
            SavedModel::load(time_right)?.into_time()?,
            blender,
        )
    }

    /// Time synthesis in each observed view, then view synthesis between
    /// the two results.
    pub fn render(&self, frames: &[Vec<Tensor>; 2], req: &RenderRequest) -> Result<Tensor> {
        let req = RenderRequest::new(req.u, req.t, req.blend)?;
        let left = render_time(&self.time[0], &frames[0], req.t)?;
        let right = render_time(&self.time[1], &frames[1], req.t)?;
        render_view(&self.view, &left, &right, req.u, req.t, req.blend, self.blender.as_ref())
    }
}
