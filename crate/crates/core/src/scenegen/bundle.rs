//! Observed frames plus oracle guidance, in memory and on disk.
//!
//! Directory layout:
//!
//! ```text
//! manifest.toml
//! view{L|R}_f{i}.png     observed frames
//! disp{L|R}_f{i}.fmap    disparity guidance
//! occ{L|R}_f{i}.fmap     visibility in the other view (1 = visible)
//! next{L|R}_f{i}.fmap    time Jacobian towards frame i+1 (i < N-1)
//! prev{L|R}_f{i}.fmap    time Jacobian towards frame i-1 (i > 0)
//! ```

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{quantize, Scene, Side};
use crate::coords::{frame_time, Branch};
use crate::pipeline::{read_fmap, read_png, write_atomic, write_fmap, write_png};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Per-view vectors are indexed by [`Side::index`], then by frame.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub scene: Scene,
    /// `(1, 3, H, W)` 8-bit-quantized frames.
    pub frames: [Vec<Tensor>; 2],
    pub disparity: [Vec<Tensor>; 2],
    pub occlusion: [Vec<Tensor>; 2],
    pub flow_next: [Vec<Option<Tensor>>; 2],
    pub flow_prev: [Vec<Option<Tensor>>; 2],
}

impl SceneBundle {
    pub fn frame(&self, side: Side, i: usize) -> &Tensor {
        &self.frames[side.index()][i]
    }

    pub fn flow(&self, side: Side, i: usize, branch: Branch) -> Result<&Tensor> {
        let set = match branch {
            Branch::Next => &self.flow_next,
            Branch::Prev => &self.flow_prev,
        };
        set[side.index()]
            .get(i)
            .and_then(|f| f.as_ref())
            .ok_or_else(|| Error::MissingGuidance(format!("{branch:?} flow for view {} frame {i}", side.letter())))
    }
}

fn gains(scene: &Scene) -> Vec<f32> {
    if scene.gain_jitter == 0.0 {
        return vec![1.0; scene.frames];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x9a1_u64);
    (0..scene.frames).map(|_| 1.0 + scene.gain_jitter * rng.random_range(-1.0f32..=1.0)).collect()
}

/// Renders every observed frame and its exact guidance.
pub fn emit_bundle(scene: &Scene) -> Result<SceneBundle> {
    scene.validate()?;
    let tex = scene.textures();
    let n = scene.frames;
    let gains = gains(scene);
    let mut b = SceneBundle {
        scene: scene.clone(),
        frames: Default::default(),
        disparity: Default::default(),
        occlusion: Default::default(),
        flow_next: Default::default(),
        flow_prev: Default::default(),
    };
    for i in 0..n {
        let t = frame_time(i, n);
        let (ml, mr) = scene.occlusion_masks(&tex, t)?;
        b.occlusion[0].push(ml);
        b.occlusion[1].push(mr);
        for side in Side::BOTH {
            let s = side.index();
            let c = scene.composite(&tex, side.u(), t)?;
            b.frames[s].push(quantize(&c.image, gains[i]));
            b.disparity[s].push(scene.disparity_at(&tex, side.u(), t)?);
            b.flow_next[s].push(if i + 1 < n { Some(scene.flow_guidance(&tex, side, i, Branch::Next)?) } else { None });
            b.flow_prev[s].push(if i > 0 { Some(scene.flow_guidance(&tex, side, i, Branch::Prev)?) } else { None });
        }
    }
    Ok(b)
}

pub fn write_bundle(bundle: &SceneBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = toml::to_string(&bundle.scene).map_err(|e| Error::Manifest(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    for side in Side::BOTH {
        let (s, v) = (side.index(), side.letter());
        for i in 0..bundle.scene.frames {
            write_png(&dir.join(format!("view{v}_f{i}.png")), &bundle.frames[s][i])?;
            write_fmap(&dir.join(format!("disp{v}_f{i}.fmap")), &bundle.disparity[s][i])?;
            write_fmap(&dir.join(format!("occ{v}_f{i}.fmap")), &bundle.occlusion[s][i])?;
            if let Some(f) = &bundle.flow_next[s][i] {
                write_fmap(&dir.join(format!("next{v}_f{i}.fmap")), f)?;
            }
            if let Some(f) = &bundle.flow_prev[s][i] {
                write_fmap(&dir.join(format!("prev{v}_f{i}.fmap")), f)?;
            }
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Scene> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scene: Scene = toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    scene.validate()?;
    Ok(scene)
}

pub fn read_bundle(dir: &Path) -> Result<SceneBundle> {
    let scene = read_manifest(dir)?;
    let (h, w, n) = (scene.height, scene.width, scene.frames);
    let check = |t: Tensor, c: usize, name: &str| -> Result<Tensor> {
        if t.shape() != [1, c, h, w] {
            return Err(Error::Manifest(format!("{name} has shape {:?}, manifest says {c}x{h}x{w}", t.shape())));
        }
        Ok(t)
    };
    let mut b = SceneBundle {
        scene: scene.clone(),
        frames: Default::default(),
        disparity: Default::default(),
        occlusion: Default::default(),
        flow_next: Default::default(),
        flow_prev: Default::default(),
    };
    for side in Side::BOTH {
        let (s, v) = (side.index(), side.letter());
        for i in 0..n {
            let name = format!("view{v}_f{i}.png");
            b.frames[s].push(check(read_png(&dir.join(&name))?, 3, &name)?);
            let name = format!("disp{v}_f{i}.fmap");
            b.disparity[s].push(check(read_fmap(&dir.join(&name))?, 1, &name)?);
            let name = format!("occ{v}_f{i}.fmap");
            b.occlusion[s].push(check(read_fmap(&dir.join(&name))?, 1, &name)?);
            let name = format!("next{v}_f{i}.fmap");
            b.flow_next[s].push(if i + 1 < n { Some(check(read_fmap(&dir.join(&name))?, 2, &name)?) } else { None });
            let name = format!("prev{v}_f{i}.fmap");
            b.flow_prev[s].push(if i > 0 { Some(check(read_fmap(&dir.join(&name))?, 2, &name)?) } else { None });
        }
    }
    Ok(b)
}
