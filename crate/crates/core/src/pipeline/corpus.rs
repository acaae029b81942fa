//! Blender training data from synthetic scenes with oracle disparity.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::CONSISTENCY_SIGMA;
use crate::coords::{frame_time, LEFT_U, RIGHT_U};
use crate::decoder::{blend_l1, blender_input, BlendTriplet, Blender};
use crate::geometry::{backward_warp, blend_weighted, consistency_weights, view_flow};
use crate::scenegen::{read_bundle, SceneBundle, MANIFEST_FILE};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Target views of every training example.
pub const CORPUS_VIEWS: [f32; 3] = [-0.25, 0.0, 0.25];

/// One example plus the consistency weights it would get without a
/// learned blender.
#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub triplet: BlendTriplet,
    pub consistency: (Tensor, Tensor),
}

/// Examples for every observed frame and every view in [`CORPUS_VIEWS`].
pub fn corpus_samples(bundle: &SceneBundle) -> Result<Vec<CorpusSample>> {
    let scene = &bundle.scene;
    let tex = scene.textures();
    let n = scene.frames;
    let mut out = Vec::with_capacity(n * CORPUS_VIEWS.len());
    for i in 0..n {
        let t = frame_time(i, n);
        let (left, right) = (&bundle.frames[0][i], &bundle.frames[1][i]);
        for u in CORPUS_VIEWS {
            let j = scene.disparity_at(&tex, u, t)?;
            let (to_l, to_r) = (view_flow(&j, u, LEFT_U), view_flow(&j, u, RIGHT_U));
            let (lw, rw) = (backward_warp(left, &to_l)?, backward_warp(right, &to_r)?);
            let consistency = (
                consistency_weights(&to_l, &view_flow(&bundle.disparity[0][i], LEFT_U, u), CONSISTENCY_SIGMA)?,
                consistency_weights(&to_r, &view_flow(&bundle.disparity[1][i], RIGHT_U, u), CONSISTENCY_SIGMA)?,
            );
            let triplet = BlendTriplet {
                input: blender_input(left, right, &lw, &rw, &to_l, &to_r)?,
                left_warped: lw,
                right_warped: rw,
                c: u - LEFT_U,
                target: scene.render_at(&tex, u, t)?,
            };
            out.push(CorpusSample { triplet, consistency });
        }
    }
    Ok(out)
}

/// Scene directories of a corpus: `scene_*` subdirectories in name order,
/// or the directory itself when it holds a single scene.
pub fn corpus_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scene_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingFile(dir.join("scene_000").join(MANIFEST_FILE)));
    }
    Ok(dirs)
}

pub fn read_corpus(dir: &Path) -> Result<Vec<SceneBundle>> {
    corpus_dirs(dir)?.iter().map(|d| read_bundle(d)).collect()
}

/// Held-out mean L1 of the learned blend next to the consistency blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlendComparison {
    pub learned_l1: f64,
    pub consistency_l1: f64,
    pub samples: usize,
}

pub fn compare_blending(net: &Blender, samples: &[CorpusSample]) -> Result<BlendComparison> {
    let (mut learned, mut baseline) = (0.0f64, 0.0f64);
    for s in samples {
        let t = &s.triplet;
        learned += blend_l1(&net.run(&t.input)?, t)?.item() as f64;
        let (wl, wr) = &s.consistency;
        let out = blend_weighted(&t.left_warped, &t.right_warped, wl, wr, t.c)?;
        baseline += out.sub(&t.target)?.mean_abs(None)?.item() as f64;
    }
    let n = samples.len().max(1) as f64;
    Ok(BlendComparison { learned_l1: learned / n, consistency_l1: baseline / n, samples: samples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::BlenderConfig;
    use crate::scenegen::{generate, Preset, PresetOptions};

    #[test]
    fn corpus_round_trip_and_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        generate(Preset::BlenderCorpus, &PresetOptions { corpus_size: Some(2), ..Default::default() }, dir.path()).unwrap();
        let bundles = read_corpus(dir.path()).unwrap();
        assert_eq!(bundles.len(), 2);
        let samples = corpus_samples(&bundles[0]).unwrap();
        assert_eq!(samples.len(), bundles[0].scene.frames * 3);
        // consistency blending with oracle disparity is close to the truth
        let net = Blender::new(BlenderConfig { levels: 2, base_channels: 4, ..Default::default() }, 0).unwrap();
        let cmp = compare_blending(&net, &samples).unwrap();
        assert!(cmp.consistency_l1 < 0.05, "{cmp:?}");
        assert_eq!(corpus_dirs(&dir.path().join("scene_001")).unwrap().len(), 1);
        assert!(matches!(corpus_dirs(&dir.path().join("scene_001").join("x")), Err(Error::MissingFile(_))));
    }
}
