//! Coordinate-conditioned convolutional decoders and the blending UNet.
//!
//! A decoder turns a coordinate vector into an image-sized map. The vector
//! goes through a small pointwise trunk, whose two heads scale and shift a
//! learned low-resolution feature grid channel by channel. The modulated
//! grid is then upsampled `n_levels` times (bilinear 2x, 3x3 conv, leaky
//! ReLU) and projected to the output channels by a final linear 3x3 conv.

mod blender;
pub mod checkpoint;
mod params;

pub use blender::{
    blend_l1, blender_forward, blender_input, train_blender, BlendTriplet, Blender, BlenderConfig, BlenderTrainConfig,
};
pub use checkpoint::Checkpoint;
pub use params::{Param, ParamStore};

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};
use params::Init;

/// Final-layer gain relative to the fan-in initializer; keeps the initial
/// output close to its bias.
const OUTPUT_INIT_GAIN: f32 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub capacity: usize,
    pub out_height: usize,
    pub out_width: usize,
    pub n_levels: usize,
    pub out_channels: usize,
    pub coord_dim: usize,
    /// Constant factor applied to the raw output. Time decoders emit
    /// per-frame displacements and scale them to per-unit-time Jacobians.
    pub output_gain: f32,
}

impl DecoderConfig {
    pub fn new(out_height: usize, out_width: usize, out_channels: usize, coord_dim: usize) -> Self {
        Self {
            capacity: 16,
            out_height,
            out_width,
            n_levels: levels_for(out_height, out_width),
            out_channels,
            coord_dim,
            output_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.n_levels;
        if self.out_height % div != 0 || self.out_width % div != 0 || self.out_height == 0 || self.out_width == 0 {
            return Err(Error::Config(format!(
                "output {}x{} is not divisible by 2^{}",
                self.out_height, self.out_width, self.n_levels
            )));
        }
        if self.capacity < 1 || self.out_channels < 1 || self.coord_dim < 1 {
            return Err(Error::Config("capacity, out_channels and coord_dim must be >= 1".into()));
        }
        if !(self.output_gain.is_finite() && self.output_gain != 0.0) {
            return Err(Error::Config("output_gain must be finite and non-zero".into()));
        }
        Ok(())
    }

    pub fn base_size(&self) -> (usize, usize) {
        (self.out_height >> self.n_levels, self.out_width >> self.n_levels)
    }

    /// Channel width after the base grid (index 0) and after each level.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.capacity * 8];
        for _ in 0..self.n_levels {
            let prev = *widths.last().unwrap();
            widths.push((prev / 2).max(self.capacity));
        }
        widths
    }
}

/// Deepest upsampling chain (at most 5 levels) that divides both extents
/// and leaves a base grid of at least 2x2.
pub fn levels_for(h: usize, w: usize) -> usize {
    (0..=5)
        .rev()
        .find(|&l| {
            let d = 1usize << l;
            h % d == 0 && w % d == 0 && h / d >= 2 && w / d >= 2
        })
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordDecoder {
    cfg: DecoderConfig,
    params: ParamStore,
}

impl CoordDecoder {
    /// Randomly initialized decoder whose output channel `k` starts near
    /// `output_bias[k]`.
    pub fn new(cfg: DecoderConfig, output_bias: &[f32], seed: u64) -> Result<Self> {
        cfg.validate()?;
        if output_bias.len() != cfg.out_channels {
            return Err(Error::Config(format!(
                "{} output biases for {} channels",
                output_bias.len(),
                cfg.out_channels
            )));
        }
        let mut init = Init::new(seed);
        let mut params = ParamStore::default();
        let widths = cfg.widths();
        let c0 = widths[0];
        let (h0, w0) = cfg.base_size();
        let d = cfg.coord_dim;
        params.push("grid", &[1, c0, h0, w0], init.uniform(c0 * h0 * w0, 1.0));
        params.push("trunk.w", &[c0, d, 1, 1], init.kaiming(c0 * d, d, 1.0));
        params.push("trunk.b", &[c0], vec![0.0; c0]);
        params.push("scale.w", &[c0, c0, 1, 1], init.kaiming(c0 * c0, c0, 0.5));
        params.push("scale.b", &[c0], vec![0.0; c0]);
        params.push("shift.w", &[c0, c0, 1, 1], init.kaiming(c0 * c0, c0, 0.5));
        params.push("shift.b", &[c0], vec![0.0; c0]);
        for l in 0..cfg.n_levels {
            let (cin, cout) = (widths[l], widths[l + 1]);
            params.push(format!("up{l}.w"), &[cout, cin, 3, 3], init.kaiming(cout * cin * 9, cin * 9, 1.0));
            params.push(format!("up{l}.b"), &[cout], vec![0.0; cout]);
        }
        let (cl, k) = (*widths.last().unwrap(), cfg.out_channels);
        params.push("out.w", &[k, cl, 3, 3], init.kaiming(k * cl * 9, cl * 9, OUTPUT_INIT_GAIN));
        params.push("out.b", &[k], output_bias.iter().map(|b| b / cfg.output_gain).collect());
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: DecoderConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let fresh = Self::new(cfg, &vec![0.0; cfg.out_channels], 0)?;
        let layout_ok = fresh.params.len() == params.len()
            && fresh
                .params
                .params()
                .iter()
                .zip(params.params())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if !layout_ok {
            return Err(Error::Format {
                what: "decoder parameters",
                msg: "parameter table does not match the decoder configuration".into(),
            });
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Zeroes the output projection so the decoder emits exactly 0.
    pub fn zero_head(&mut self) {
        for name in ["out.w", "out.b"] {
            if let Some(p) = self.params.get_mut(name) {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Forward pass on leaves from [`ParamStore::bind`]. Returns
    /// `(1, out_channels, out_height, out_width)`.
    pub fn forward(&self, leaves: &[Tensor], coord: &[f32]) -> Result<Tensor> {
        if coord.len() != self.cfg.coord_dim {
            return Err(Error::Config(format!(
                "coordinate vector of length {} for a decoder expecting {}",
                coord.len(),
                self.cfg.coord_dim
            )));
        }
        let c = Tensor::from_vec(&[1, coord.len(), 1, 1], coord.to_vec())?;
        let hidden = c.conv2d(&leaves[1], &leaves[2], 1, 0)?.leaky_relu();
        let scale = hidden.conv2d(&leaves[3], &leaves[4], 1, 0)?.add_scalar(1.0);
        let shift = hidden.conv2d(&leaves[5], &leaves[6], 1, 0)?;
        let mut x = leaves[0].channel_affine(&scale, &shift)?.leaky_relu();
        for l in 0..self.cfg.n_levels {
            let (w, b) = (&leaves[7 + 2 * l], &leaves[8 + 2 * l]);
            x = x.upsample_bilinear2x()?.conv2d(w, b, 1, 1)?.leaky_relu();
        }
        let i = 7 + 2 * self.cfg.n_levels;
        let out = x.conv2d(&leaves[i], &leaves[i + 1], 1, 1)?;
        Ok(if self.cfg.output_gain == 1.0 { out } else { out.mul_scalar(self.cfg.output_gain) })
    }

    /// Forward pass without gradient tracking.
    pub fn run(&self, coord: &[f32]) -> Result<Tensor> {
        let leaves = self.params.bind(false)?;
        self.forward(&leaves, coord)
    }
}

/// View decoder emitting one disparity plane per anchor, each plane's
/// output bias starting at its anchor disparity.
pub fn build_view_decoder(cfg: DecoderConfig, plane_disparities: &[f32], seed: u64) -> Result<CoordDecoder> {
    if cfg.out_channels != plane_disparities.len() {
        return Err(Error::Config(format!(
            "view decoder has {} output channels but {} planes",
            cfg.out_channels,
            plane_disparities.len()
        )));
    }
    CoordDecoder::new(cfg, plane_disparities, seed)
}

/// Time decoder emitting a two-channel (x, y) Jacobian, or four channels
/// (next then previous) for the dual-head variant.
pub fn build_time_decoder(cfg: DecoderConfig, seed: u64) -> Result<CoordDecoder> {
    if cfg.out_channels != 2 && cfg.out_channels != 4 {
        return Err(Error::Config(format!(
            "time decoder needs 2 (or 4 for dual heads) channels, got {}",
            cfg.out_channels
        )));
    }
    CoordDecoder::new(cfg, &vec![0.0; cfg.out_channels], seed)
}
