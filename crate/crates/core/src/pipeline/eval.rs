//! Held-out sweeps against the analytic ground truth.

use serde::{Deserialize, Serialize};

use super::{compute_metrics, BlendMode, RenderRequest, Renderer};
use crate::coords::frame_time;
use crate::scenegen::{Scene, SceneBundle};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const METRICS_VERSION: u32 = 1;
/// Pixels excluded on every side when scoring renders.
pub const EVAL_BORDER: usize = 4;
pub const THREADS_ENV: &str = "SXF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub u: f32,
    pub t: f32,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub scene_seed: u64,
    pub samples: Vec<SampleMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    /// Sorts samples by `(t, u)` and averages in that order, so the report
    /// does not depend on evaluation order.
    pub fn new(scene_seed: u64, mut samples: Vec<SampleMetrics>) -> Self {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.u.total_cmp(&b.u)));
        let n = samples.len().max(1) as f64;
        let aggregate = Aggregate {
            psnr_mean: samples.iter().map(|s| s.psnr).sum::<f64>() / n,
            ssim_mean: samples.iter().map(|s| s.ssim).sum::<f64>() / n,
        };
        Self { format_version: METRICS_VERSION, scene_seed, samples, aggregate }
    }
}

/// Middle view at every midpoint between observed frames.
pub fn midpoint_sweep(frames: usize) -> Vec<(f32, f32)> {
    (0..frames.saturating_sub(1)).map(|i| (0.0, 0.5 * (frame_time(i, frames) + frame_time(i + 1, frames)))).collect()
}

/// Worker count: available cores, capped by `SXF_THREADS` when set.
pub fn thread_budget() -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cores.min(cap),
        _ => cores,
    }
}

fn score(scene: &Scene, textures: &[crate::scenegen::Texture], out: &Tensor, u: f32, t: f32) -> Result<SampleMetrics> {
    let truth = scene.render_at(textures, u, t)?;
    let m = compute_metrics(out, &truth, EVAL_BORDER)?;
    Ok(SampleMetrics { u, t, psnr: m.psnr, ssim: m.ssim })
}

/// Renders and scores every `(u, t)` in `coords`. Samples are split over
/// worker threads; each worker rebuilds its own copy of the source frames.
pub fn evaluate(
    bundle: &SceneBundle,
    renderer: &Renderer,
    coords: &[(f32, f32)],
    blend: BlendMode,
    threads: usize,
) -> Result<MetricsReport> {
    let requests: Vec<RenderRequest> =
        coords.iter().map(|&(u, t)| RenderRequest::new(u, t, blend)).collect::<Result<_>>()?;
    let scene = &bundle.scene;
    let raw: [Vec<(Vec<usize>, Vec<f32>)>; 2] =
        bundle.frames.clone().map(|v| v.iter().map(|f| (f.shape().to_vec(), f.to_vec())).collect());
    let threads = threads.clamp(1, requests.len().max(1));
    let chunk = requests.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<SampleMetrics>>> = std::thread::scope(|s| {
        let handles: Vec<_> = requests
            .chunks(chunk)
            .map(|part| {
                let raw = &raw;
                s.spawn(move || -> Result<Vec<SampleMetrics>> {
                    let frames: [Vec<Tensor>; 2] = [0, 1].map(|k| {
                        raw[k].iter().map(|(shape, data)| Tensor::from_vec(shape, data.clone()).expect("frame shape")).collect()
                    });
                    let textures = scene.textures();
                    part.iter().map(|req| score(scene, &textures, &renderer.render(&frames, req)?, req.u, req.t)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("evaluation worker panicked".into())))).collect()
    });
    let mut samples = Vec::with_capacity(requests.len());
    for r in results {
        samples.extend(r?);
    }
    Ok(MetricsReport::new(scene.seed, samples))
}
