//! Deterministic synthetic stereo videos with exact guidance.
//!
//! A scene is a stack of textured layers. Each layer has a binary alpha, a
//! constant disparity `d` and a piecewise-linear trajectory over frame
//! indices. In view `u` at time `t` a layer's top-left corner sits at
//! `(x(t) - d·u, y(t))`. Layers are composited in ascending `z_order`.
//!
//! Because disparities are even integers and keyframes are integer
//! positions at integer frames, every observed frame places layers on the
//! pixel grid exactly, so oracle warps between observations are exact.

mod bundle;
mod presets;
mod texture;

pub use bundle::{emit_bundle, read_bundle, read_manifest, write_bundle, SceneBundle, MANIFEST_FILE};
pub use presets::{generate, preset, Preset, PresetOptions};
pub use texture::Texture;

use serde::{Deserialize, Serialize};

use crate::coords::{Branch, LEFT_U, RIGHT_U};
use crate::geometry::PlaneSpec;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn u(self) -> f32 {
        match self {
            Side::Left => LEFT_U,
            Side::Right => RIGHT_U,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "L" => Ok(Side::Left),
            "right" | "R" => Ok(Side::Right),
            _ => Err(Error::Config(format!("unknown view side {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Full-frame, static, zero-disparity backdrop.
    Background,
    Rect,
    Ellipse,
}

/// Top-left corner of a layer at a frame index, in the centre view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: f32,
    pub x: f32,
    pub y: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
    pub texture_seed: u64,
    pub disparity: f32,
    pub z_order: i32,
    pub keyframes: Vec<Keyframe>,
}

impl LayerSpec {
    /// Corner position at a (possibly fractional) frame index; constant
    /// before the first and after the last keyframe.
    pub fn position(&self, frame: f64) -> (f64, f64) {
        let k = &self.keyframes;
        if frame <= k[0].frame as f64 {
            return (k[0].x as f64, k[0].y as f64);
        }
        for pair in k.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if frame <= b.frame as f64 {
                let s = (frame - a.frame as f64) / (b.frame as f64 - a.frame as f64);
                return (a.x as f64 + s * (b.x - a.x) as f64, a.y as f64 + s * (b.y - a.y) as f64);
            }
        }
        let last = k[k.len() - 1];
        (last.x as f64, last.y as f64)
    }
}

/// Scene description; serialized verbatim as the bundle manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub format_version: u32,
    pub preset: String,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Per-frame brightness jitter amplitude applied to observed frames.
    #[serde(default)]
    pub gain_jitter: f32,
    pub max_disparity: f32,
    /// Recommended disparity-plane anchors for this scene.
    pub planes: PlaneSpec,
    pub layers: Vec<LayerSpec>,
}

/// One composited image plus the index of the layer visible at each pixel.
pub struct Composite {
    /// `(1, 3, H, W)` values in `[0, 1]`, not quantized.
    pub image: Tensor,
    pub top: Vec<u16>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        if self.format_version != MANIFEST_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if self.frames < 2 || self.height < 4 || self.width < 4 {
            return bad(format!("degenerate scene {}x{} with {} frames", self.height, self.width, self.frames));
        }
        match self.layers.first() {
            Some(l) if l.shape == Shape::Background => {
                if l.width != self.width || l.height != self.height || l.disparity != 0.0 {
                    return bad("background must be full-frame with zero disparity".into());
                }
                if l.keyframes.iter().any(|k| k.x != 0.0 || k.y != 0.0) {
                    return bad("background must be static at the origin".into());
                }
            }
            _ => return bad("first layer must be the background".into()),
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.keyframes.is_empty() || l.keyframes.windows(2).any(|p| p[1].frame <= p[0].frame) {
                return bad(format!("layer {i} keyframes must be non-empty and strictly increasing"));
            }
            if l.width == 0 || l.height == 0 || l.disparity < 0.0 || !l.disparity.is_finite() {
                return bad(format!("layer {i} has invalid size or disparity"));
            }
            if i > 0 && l.shape == Shape::Background {
                return bad(format!("layer {i}: only the first layer may be a background"));
            }
        }
        self.check_in_frame()
    }

    /// Every sprite must stay at least one pixel inside the frame for all
    /// `u ∈ [-0.5, 0.5]` and all `t`. Piecewise-linear paths reach their
    /// extremes at keyframes, so checking those suffices.
    fn check_in_frame(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate().skip(1) {
            for k in &l.keyframes {
                for u in [LEFT_U, RIGHT_U] {
                    let x = k.x - l.disparity * u;
                    let inside = x >= 1.0
                        && k.y >= 1.0
                        && x + (l.width - 1) as f32 <= (self.width - 2) as f32
                        && k.y + (l.height - 1) as f32 <= (self.height - 2) as f32;
                    if !inside {
                        return Err(Error::OutOfRange(format!(
                            "layer {i} leaves the frame at frame {} (u = {u})",
                            k.frame
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn textures(&self) -> Vec<Texture> {
        self.layers.iter().map(Texture::generate).collect()
    }

    fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.layers.len()).collect();
        order.sort_by_key(|&i| (self.layers[i].z_order, i));
        order
    }

    pub fn frame_index(&self, t: f32) -> f64 {
        t as f64 * (self.frames - 1) as f64
    }

    /// Composites the scene at view `u` and time `t`.
    pub fn composite(&self, textures: &[Texture], u: f32, t: f32) -> Result<Composite> {
        if !(LEFT_U..=RIGHT_U).contains(&u) || !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(format!("render coordinate (u = {u}, t = {t})")));
        }
        let (h, w) = (self.height, self.width);
        let hw = h * w;
        let mut img = vec![0.0f32; 3 * hw];
        let mut top = vec![0u16; hw];
        let f = self.frame_index(t);
        for li in self.order() {
            let layer = &self.layers[li];
            let tex = &textures[li];
            let (x0, y0) = layer.position(f);
            let ox = x0 - layer.disparity as f64 * u as f64;
            let oy = y0;
            let xs = (ox.floor() as isize - 1).max(0) as usize..((ox + layer.width as f64 + 1.0).ceil() as usize).min(w);
            let ys = (oy.floor() as isize - 1).max(0) as usize..((oy + layer.height as f64 + 1.0).ceil() as usize).min(h);
            for y in ys {
                let ty = y as f64 - oy;
                for x in xs.clone() {
                    let tx = x as f64 - ox;
                    if !tex.covers(tx, ty) {
                        continue;
                    }
                    let rgb = tex.sample(tx, ty);
                    for c in 0..3 {
                        img[c * hw + y * w + x] = rgb[c];
                    }
                    top[y * w + x] = li as u16;
                }
            }
        }
        Ok(Composite { image: Tensor::from_vec(&[1, 3, h, w], img)?, top })
    }

    /// Analytic image at `(u, t)`, quantized to 8 bits like observed frames.
    pub fn render_at(&self, textures: &[Texture], u: f32, t: f32) -> Result<Tensor> {
        let c = self.composite(textures, u, t)?;
        Ok(quantize(&c.image, 1.0))
    }

    /// Disparity of the visible layer at each pixel, `(1, 1, H, W)`.
    pub fn disparity_at(&self, textures: &[Texture], u: f32, t: f32) -> Result<Tensor> {
        let c = self.composite(textures, u, t)?;
        self.per_pixel(&c.top, 1, |l| vec![self.layers[l].disparity])
    }

    /// Time Jacobian of the visible layer at observed frame `i` in view
    /// `side`, in pixels per unit of normalized time. `Next` is the velocity
    /// of the segment `i → i+1`, `Prev` that of `i-1 → i`.
    pub fn flow_guidance(&self, textures: &[Texture], side: Side, i: usize, branch: Branch) -> Result<Tensor> {
        let n = self.frames;
        let (a, b) = match branch {
            Branch::Next if i + 1 < n => (i, i + 1),
            Branch::Prev if i >= 1 && i < n => (i - 1, i),
            _ => return Err(Error::MissingGuidance(format!("no {branch:?} flow at frame {i} of {n}"))),
        };
        let t = crate::coords::frame_time(i, n);
        let c = self.composite(textures, side.u(), t)?;
        let scale = (n - 1) as f64;
        self.per_pixel(&c.top, 2, |l| {
            let (xa, ya) = self.layers[l].position(a as f64);
            let (xb, yb) = self.layers[l].position(b as f64);
            vec![((xb - xa) * scale) as f32, ((yb - ya) * scale) as f32]
        })
    }

    fn per_pixel(&self, top: &[u16], channels: usize, value: impl Fn(usize) -> Vec<f32>) -> Result<Tensor> {
        let hw = self.height * self.width;
        let table: Vec<Vec<f32>> = (0..self.layers.len()).map(&value).collect();
        let mut out = vec![0.0f32; channels * hw];
        for (p, &l) in top.iter().enumerate() {
            for c in 0..channels {
                out[c * hw + p] = table[l as usize][c];
            }
        }
        Ok(Tensor::from_vec(&[1, channels, self.height, self.width], out)?)
    }

    /// Exact visibility masks at frame time `t`: a pixel is visible (1) when
    /// the same layer is on top at its corresponding position in the other
    /// view.
    pub fn occlusion_masks(&self, textures: &[Texture], t: f32) -> Result<(Tensor, Tensor)> {
        let l = self.composite(textures, LEFT_U, t)?.top;
        let r = self.composite(textures, RIGHT_U, t)?.top;
        let (h, w) = (self.height, self.width);
        let check = |own: &[u16], other: &[u16], sign: f64| -> Vec<f32> {
            let mut out = vec![0.0f32; h * w];
            for y in 0..h {
                for x in 0..w {
                    let layer = own[y * w + x];
                    let xo = x as f64 + sign * self.layers[layer as usize].disparity as f64;
                    let visible = xo >= 0.0 && xo < w as f64 && xo.fract() == 0.0 && other[y * w + xo as usize] == layer;
                    out[y * w + x] = if visible { 1.0 } else { 0.0 };
                }
            }
            out
        };
        Ok((
            Tensor::from_vec(&[1, 1, h, w], check(&l, &r, -1.0))?,
            Tensor::from_vec(&[1, 1, h, w], check(&r, &l, 1.0))?,
        ))
    }
}

/// Scales by `gain` and rounds to the nearest 8-bit level.
pub fn quantize(img: &Tensor, gain: f32) -> Tensor {
    let data = img.data().iter().map(|&v| crate::pipeline::to_u8(v * gain) as f32 / 255.0).collect();
    Tensor::from_vec(img.shape(), data).expect("shape preserved")
}
