use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Shape};

/// Procedural layer appearance: smooth seeded noise with one hard-edged
/// primitive, plus a binary alpha.
#[derive(Debug, Clone)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    /// Planar RGB, `3 × height × width`.
    pub rgb: Vec<f32>,
    pub alpha: Vec<bool>,
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

impl Texture {
    pub fn generate(layer: &LayerSpec) -> Self {
        let (w, h) = (layer.width, layer.height);
        let mut rng = ChaCha8Rng::seed_from_u64(layer.texture_seed);
        let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.75));
        let waves: Vec<Wave> = (0..4)
            .map(|_| {
                let period = rng.random_range(5.0..20.0);
                let angle = rng.random_range(0.0..TAU);
                Wave {
                    fx: angle.cos() / period,
                    fy: angle.sin() / period,
                    phase: rng.random_range(0.0..TAU),
                    amp: std::array::from_fn(|_| rng.random_range(-0.12..0.12)),
                }
            })
            .collect();
        // a disc of contrasting colour somewhere in the patch
        let accent: [f64; 3] = std::array::from_fn(|c| 1.0 - base[c]);
        let (cx, cy) = (rng.random_range(0.2..0.8) * w as f64, rng.random_range(0.2..0.8) * h as f64);
        let radius = rng.random_range(0.15..0.3) * w.min(h) as f64;

        let hw = w * h;
        let mut rgb = vec![0.0f32; 3 * hw];
        let mut alpha = vec![false; hw];
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let in_disc = (xf - cx).powi(2) + (yf - cy).powi(2) <= radius * radius;
                for c in 0..3 {
                    let mut v = if in_disc { accent[c] } else { base[c] };
                    for wave in &waves {
                        v += wave.amp[c] * (TAU * (wave.fx * xf + wave.fy * yf) + wave.phase).sin();
                    }
                    rgb[c * hw + y * w + x] = v.clamp(0.0, 1.0) as f32;
                }
                alpha[y * w + x] = match layer.shape {
                    Shape::Background | Shape::Rect => true,
                    Shape::Ellipse => {
                        let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
                        let dx = (xf + 0.5 - rx) / rx;
                        let dy = (yf + 0.5 - ry) / ry;
                        dx * dx + dy * dy <= 1.0
                    }
                };
            }
        }
        Self { width: w, height: h, rgb, alpha }
    }

    /// Nearest-texel coverage test at texture coordinates `(tx, ty)`.
    pub fn covers(&self, tx: f64, ty: f64) -> bool {
        let (ix, iy) = ((tx + 0.5).floor(), (ty + 0.5).floor());
        ix >= 0.0 && iy >= 0.0 && (ix as usize) < self.width && (iy as usize) < self.height && {
            self.alpha[iy as usize * self.width + ix as usize]
        }
    }

    /// Bilinear colour lookup, clamped to the patch.
    pub fn sample(&self, tx: f64, ty: f64) -> [f32; 3] {
        let (w, h) = (self.width, self.height);
        let tx = tx.clamp(0.0, (w - 1) as f64);
        let ty = ty.clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (tx.floor() as usize, ty.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = ((tx - x0 as f64) as f32, (ty - y0 as f64) as f32);
        let hw = w * h;
        std::array::from_fn(|c| {
            let p = &self.rgb[c * hw..(c + 1) * hw];
            let top = p[y0 * w + x0] + fx * (p[y0 * w + x1] - p[y0 * w + x0]);
            let bottom = p[y1 * w + x0] + fx * (p[y1 * w + x1] - p[y1 * w + x0]);
            top + fy * (bottom - top)
        })
    }
}
