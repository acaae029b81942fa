//! Learned blending weights: a small UNet over the two sources, their warps
//! and the flows used to produce the warps.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use crate::geometry::blend_weighted;
use crate::tensor::{adam_step, AdamState, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlenderConfig {
    pub in_channels: usize,
    pub levels: usize,
    pub base_channels: usize,
}

impl Default for BlenderConfig {
    fn default() -> Self {
        Self { in_channels: 16, levels: 5, base_channels: 32 }
    }
}

impl BlenderConfig {
    fn widths(&self) -> Vec<usize> {
        (0..=self.levels).map(|l| self.base_channels * (1usize << l.min(2))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blender {
    cfg: BlenderConfig,
    params: ParamStore,
}

impl Blender {
    pub fn new(cfg: BlenderConfig, seed: u64) -> Result<Self> {
        if cfg.in_channels != 16 || cfg.base_channels == 0 || cfg.levels == 0 {
            return Err(Error::Config(format!("unsupported blender configuration {cfg:?}")));
        }
        let mut init = Init::new(seed);
        let mut params = ParamStore::default();
        let w = cfg.widths();
        let mut conv = |params: &mut ParamStore, name: String, cin: usize, cout: usize, gain: f32| {
            params.push(format!("{name}.w"), &[cout, cin, 3, 3], init.kaiming(cout * cin * 9, cin * 9, gain));
            params.push(format!("{name}.b"), &[cout], vec![0.0; cout]);
        };
        conv(&mut params, "enc0".into(), cfg.in_channels, w[0], 1.0);
        for l in 1..=cfg.levels {
            conv(&mut params, format!("down{l}"), w[l - 1], w[l], 1.0);
        }
        for l in (1..=cfg.levels).rev() {
            conv(&mut params, format!("up{l}"), w[l] + w[l - 1], w[l - 1], 1.0);
        }
        conv(&mut params, "head".into(), w[0], 1, 0.1);
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: BlenderConfig, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(cfg, 0)?;
        let same = fresh.params.len() == params.len()
            && fresh.params.params().iter().zip(params.params()).all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !same {
            return Err(Error::Format { what: "blender parameters", msg: "layout mismatch".into() });
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &BlenderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `input: (N, 16, H, W)` → weight map `(N, 1, H, W)` in (0, 1).
    pub fn forward(&self, leaves: &[Tensor], input: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = input.dims4("blender")?;
        if c != self.cfg.in_channels {
            return Err(Error::Config(format!("blender expects {} channels, got {c}", self.cfg.in_channels)));
        }
        let div = 1usize << self.cfg.levels;
        if h % div != 0 || w % div != 0 {
            return Err(Error::Config(format!("blender input {h}x{w} not divisible by {div}")));
        }
        let conv = |x: &Tensor, i: usize, stride: usize| x.conv2d(&leaves[2 * i], &leaves[2 * i + 1], stride, 1);
        let mut skips = vec![conv(input, 0, 1)?.leaky_relu()];
        for l in 1..=self.cfg.levels {
            let x = conv(skips.last().unwrap(), l, 2)?.leaky_relu();
            skips.push(x);
        }
        let mut x = skips.pop().unwrap();
        for (j, l) in (1..=self.cfg.levels).rev().enumerate() {
            let up = x.upsample_bilinear2x()?;
            let cat = Tensor::concat_channels(&[&up, &skips[l - 1]])?;
            x = conv(&cat, self.cfg.levels + 1 + j, 1)?.leaky_relu();
        }
        Ok(conv(&x, 2 * self.cfg.levels + 1, 1)?.sigmoid())
    }

    pub fn run(&self, input: &Tensor) -> Result<Tensor> {
        let leaves = self.params.bind(false)?;
        self.forward(&leaves, input)
    }
}

/// Stacks the 16-channel blender input: left and right sources (3 + 3),
/// their warps (3 + 3), and the flows towards each source (2 + 2).
/// Single-channel (horizontal) flows are duplicated to two channels.
pub fn blender_input(
    left_src: &Tensor,
    right_src: &Tensor,
    left_warped: &Tensor,
    right_warped: &Tensor,
    flow_l: &Tensor,
    flow_r: &Tensor,
) -> Result<Tensor> {
    let two = |f: &Tensor| -> Result<Tensor> {
        match f.dims4("blender_input")?.1 {
            1 => Ok(f.repeat_channels(2)?),
            2 => Ok(f.clone()),
            c => Err(Error::Config(format!("flow with {c} channels"))),
        }
    };
    for img in [left_src, right_src, left_warped, right_warped] {
        if img.dims4("blender_input")?.1 != 3 {
            return Err(Error::Config(format!("blender images must have 3 channels, got {:?}", img.shape())));
        }
    }
    let (fl, fr) = (two(flow_l)?, two(flow_r)?);
    Ok(Tensor::concat_channels(&[left_src, right_src, left_warped, right_warped, &fl, &fr])?)
}

pub fn blender_forward(
    net: &Blender,
    left_src: &Tensor,
    right_src: &Tensor,
    left_warped: &Tensor,
    right_warped: &Tensor,
    flow_l: &Tensor,
    flow_r: &Tensor,
) -> Result<Tensor> {
    net.run(&blender_input(left_src, right_src, left_warped, right_warped, flow_l, flow_r)?)
}

/// One supervised example: blender input, the two warps, the interpolation
/// factor and the ground-truth image at the target coordinate.
#[derive(Debug, Clone)]
pub struct BlendTriplet {
    pub input: Tensor,
    pub left_warped: Tensor,
    pub right_warped: Tensor,
    pub c: f32,
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlenderTrainConfig {
    pub iterations: usize,
    pub lr: f32,
    /// Weight of the L1 reconstruction term.
    pub l1_weight: f32,
    pub seed: u64,
}

impl Default for BlenderTrainConfig {
    fn default() -> Self {
        Self { iterations: 10_000, lr: 1e-4, l1_weight: 100.0, seed: 0 }
    }
}

/// Mean L1 of the weight-blended result against the target, unscaled.
pub fn blend_l1(wl: &Tensor, t: &BlendTriplet) -> Result<Tensor> {
    let wr = wl.mul_scalar(-1.0).add_scalar(1.0);
    let out = blend_weighted(&t.left_warped, &t.right_warped, wl, &wr, t.c)?;
    Ok(out.sub(&t.target)?.mean_abs(None)?)
}

/// Trains a fresh blender on `corpus`, one example per step.
pub fn train_blender(
    cfg: BlenderConfig,
    train: &BlenderTrainConfig,
    corpus: &[BlendTriplet],
) -> Result<(Blender, AdamState, Vec<f32>)> {
    if corpus.is_empty() {
        return Err(Error::Config("blender corpus is empty".into()));
    }
    let mut net = Blender::new(cfg, train.seed)?;
    let mut adam = AdamState::new(net.params.sizes(), train.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0xb1e4d);
    let mut losses = Vec::with_capacity(train.iterations);
    for it in 0..train.iterations {
        let sample = &corpus[rng.random_range(0..corpus.len())];
        let leaves = net.params.bind(true)?;
        let wl = net.forward(&leaves, &sample.input)?;
        let loss = blend_l1(&wl, sample)?.mul_scalar(train.l1_weight);
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite { iteration: it, sample: "blender".into() });
        }
        loss.backward()?;
        let grads: Vec<Option<Vec<f32>>> = leaves.iter().map(|l| l.grad()).collect();
        let mut buffers = net.params.snapshot();
        adam_step(&mut buffers, &grads, &mut adam)?;
        net.params.restore(buffers);
        losses.push(value);
    }
    Ok((net, adam, losses))
}
