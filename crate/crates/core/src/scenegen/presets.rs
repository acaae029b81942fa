use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{emit_bundle, write_bundle, Keyframe, LayerSpec, Scene, Shape, MANIFEST_VERSION};
use crate::geometry::PlaneSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 96×160, 9 frames, disparities up to 24 px, gentle linear motion.
    Reference,
    /// 64×320, 5 frames, disparities up to 48 px.
    LargeDisparity,
    /// 64×128, 9 frames; one segment moves four times faster.
    MotionSpike,
    /// 64×128, 9 frames; parabolic and back-and-forth paths.
    Nonlinear,
    /// A directory of small random scenes for training the blender.
    BlenderCorpus,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Reference, Preset::LargeDisparity, Preset::MotionSpike, Preset::Nonlinear, Preset::BlenderCorpus];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Reference => "reference",
            Preset::LargeDisparity => "large-disparity",
            Preset::MotionSpike => "motion-spike",
            Preset::Nonlinear => "nonlinear",
            Preset::BlenderCorpus => "blender-corpus",
        }
    }

    /// Default `(height, width, frames)`.
    pub fn default_size(self) -> (usize, usize, usize) {
        match self {
            Preset::Reference => (96, 160, 9),
            Preset::LargeDisparity => (64, 320, 5),
            Preset::MotionSpike | Preset::Nonlinear => (64, 128, 9),
            Preset::BlenderCorpus => (32, 64, 3),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PresetOptions {
    pub seed: u64,
    pub frames: Option<usize>,
    /// `(height, width)`; sprite geometry scales with the frame.
    pub size: Option<(usize, usize)>,
    pub gain_jitter: f32,
    /// Scene count for the blender corpus.
    pub corpus_size: Option<usize>,
}

struct Builder {
    h: usize,
    w: usize,
    n: usize,
    sx: f32,
    sy: f32,
    rng: ChaCha8Rng,
    layers: Vec<LayerSpec>,
}

fn even(v: f32) -> f32 {
    (v / 2.0).round() * 2.0
}

impl Builder {
    fn new(preset: Preset, opts: &PresetOptions) -> Self {
        let (h0, w0, n0) = preset.default_size();
        let (h, w) = opts.size.unwrap_or((h0, w0));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let background = LayerSpec {
            shape: Shape::Background,
            width: w,
            height: h,
            texture_seed: rng.random(),
            disparity: 0.0,
            z_order: 0,
            keyframes: vec![Keyframe { frame: 0.0, x: 0.0, y: 0.0 }],
        };
        Self {
            h,
            w,
            n: opts.frames.unwrap_or(n0),
            sx: w as f32 / w0 as f32,
            sy: h as f32 / h0 as f32,
            rng,
            layers: vec![background],
        }
    }

    /// Adds a sprite given in default-size pixel units; `path` maps a frame
    /// index to a displacement (in default-size pixels) from `start`.
    fn sprite(&mut self, shape: Shape, size: (f32, f32), d: f32, start: (f32, f32), path: impl Fn(usize) -> (f32, f32)) {
        let keyframes = (0..self.n)
            .map(|i| {
                let (dx, dy) = path(i);
                Keyframe { frame: i as f32, x: ((start.0 + dx) * self.sx).round(), y: ((start.1 + dy) * self.sy).round() }
            })
            .collect();
        let disparity = even(d * self.sx);
        self.layers.push(LayerSpec {
            shape,
            width: ((size.0 * self.sx).round() as usize).max(2),
            height: ((size.1 * self.sy).round() as usize).max(2),
            texture_seed: self.rng.random(),
            disparity,
            z_order: 0,
            keyframes,
        });
    }

    fn finish(mut self, preset: Preset, opts: &PresetOptions) -> Result<Scene> {
        // nearer layers occlude farther ones
        let mut by_depth: Vec<usize> = (1..self.layers.len()).collect();
        by_depth.sort_by(|&a, &b| self.layers[a].disparity.total_cmp(&self.layers[b].disparity));
        for (z, i) in by_depth.into_iter().enumerate() {
            self.layers[i].z_order = z as i32 + 1;
        }
        let max_disparity = self.layers.iter().map(|l| l.disparity).fold(0.0, f32::max);
        let scene = Scene {
            format_version: MANIFEST_VERSION,
            preset: preset.name().into(),
            seed: opts.seed,
            height: self.h,
            width: self.w,
            frames: self.n,
            gain_jitter: opts.gain_jitter,
            max_disparity,
            planes: PlaneSpec::for_max_disparity(max_disparity, 6)?,
            layers: self.layers,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Builds a named single-scene preset.
pub fn preset(which: Preset, opts: &PresetOptions) -> Result<Scene> {
    let mut b = Builder::new(which, opts);
    if b.n < 2 {
        return Err(Error::Config(format!("a scene needs at least 2 frames, got {}", b.n)));
    }
    match which {
        Preset::Reference => {
            b.sprite(Shape::Rect, (30.0, 24.0), 24.0, (22.0, 12.0), |i| (2.0 * i as f32, 0.0));
            b.sprite(Shape::Ellipse, (32.0, 30.0), 14.0, (100.0, 54.0), |i| (-2.0 * i as f32, -2.0 * i as f32));
            b.sprite(Shape::Rect, (22.0, 18.0), 8.0, (60.0, 58.0), |i| (2.0 * i as f32, 2.0 * i as f32));
        }
        Preset::LargeDisparity => {
            b.sprite(Shape::Rect, (44.0, 30.0), 48.0, (40.0, 10.0), |i| (4.0 * i as f32, 0.0));
            b.sprite(Shape::Ellipse, (40.0, 36.0), 32.0, (150.0, 20.0), |i| (-4.0 * i as f32, 0.0));
            b.sprite(Shape::Rect, (36.0, 24.0), 18.0, (230.0, 30.0), |i| (2.0 * i as f32, 0.0));
            b.sprite(Shape::Ellipse, (30.0, 30.0), 10.0, (96.0, 28.0), |_| (0.0, 0.0));
        }
        Preset::MotionSpike => {
            let spike = (b.n - 1) / 2;
            let travel = move |i: usize| -> f32 { (0..i).map(|s| if s == spike { 8.0 } else { 2.0 }).sum() };
            b.sprite(Shape::Rect, (24.0, 20.0), 8.0, (10.0, 8.0), move |i| (travel(i), 0.0));
            b.sprite(Shape::Ellipse, (24.0, 22.0), 12.0, (68.0, 34.0), move |i| (travel(i), 0.0));
        }
        Preset::Nonlinear => {
            let mid = (b.n - 1) as f32 / 2.0;
            b.sprite(Shape::Rect, (20.0, 16.0), 8.0, (20.0, 8.0), move |i| {
                let f = i as f32 - mid;
                (2.0 * i as f32, 2.0 * f * f)
            });
            let len = (b.n - 1) as f32;
            b.sprite(Shape::Ellipse, (20.0, 20.0), 10.0, (64.0, 36.0), move |i| {
                let f = i as f32 * 8.0 / len;
                ((f * (8.0 - f)).round(), 0.0)
            });
        }
        Preset::BlenderCorpus => {
            let (w0, h0) = (64.0, 32.0);
            for _ in 0..2 {
                let shape = if b.rng.random::<bool>() { Shape::Rect } else { Shape::Ellipse };
                let (sw, sh) = (b.rng.random_range(10..18) as f32, b.rng.random_range(8..14) as f32);
                let d = 2.0 * b.rng.random_range(1..7) as f32;
                let (vx, vy) = (2.0 * b.rng.random_range(-1..=1) as f32, 2.0 * b.rng.random_range(-1..=1) as f32);
                let span = (b.n - 1) as f32;
                let margin = d / 2.0 + 1.0;
                let lo_x = margin + (-vx * span).max(0.0);
                let hi_x = w0 - 2.0 - sw - margin - (vx * span).max(0.0);
                let lo_y = 1.0 + (-vy * span).max(0.0);
                let hi_y = h0 - 2.0 - sh - (vy * span).max(0.0);
                let x = b.rng.random_range(lo_x..=hi_x.max(lo_x)).round();
                let y = b.rng.random_range(lo_y..=hi_y.max(lo_y)).round();
                b.sprite(shape, (sw, sh), d, (x, y), move |i| (vx * i as f32, vy * i as f32));
            }
        }
    }
    b.finish(which, opts)
}

/// Generates a preset and writes its bundle(s) under `out`. The blender
/// corpus writes `scene_000`, `scene_001`, … subdirectories.
pub fn generate(which: Preset, opts: &PresetOptions, out: &Path) -> Result<Vec<Scene>> {
    let scenes = if which == Preset::BlenderCorpus {
        let count = opts.corpus_size.unwrap_or(8);
        (0..count as u64)
            .map(|k| preset(which, &PresetOptions { seed: opts.seed.wrapping_mul(1000).wrapping_add(k), ..*opts }))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![preset(which, opts)?]
    };
    for (k, scene) in scenes.iter().enumerate() {
        let dir = if which == Preset::BlenderCorpus { out.join(format!("scene_{k:03}")) } else { out.to_path_buf() };
        write_bundle(&emit_bundle(scene)?, &dir)?;
    }
    Ok(scenes)
}
