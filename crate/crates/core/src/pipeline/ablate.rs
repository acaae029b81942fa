//! Paired-configuration ablation runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{Aggregate, MetricsReport, SampleMetrics, EVAL_BORDER};
use super::{compute_metrics, render_time, render_view, BlendMode};
use crate::coords::frame_time;
use crate::scenegen::{SceneBundle, Side};
use crate::training::{
    optimize_time, optimize_view, Ablation, LossReport, OptimConfig, TimeMode, TimeModel, ViewModel, ViewVariant,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    #[default]
    View,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    #[serde(default)]
    pub kind: RunKind,
    #[serde(default)]
    pub ablate: Option<Ablation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    #[serde(default)]
    pub margin_db: f64,
}

/// An ablation suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(rename = "config")]
    pub configs: Vec<SuiteConfig>,
    #[serde(default, rename = "compare")]
    pub comparisons: Vec<Comparison>,
}

impl Suite {
    pub fn parse(text: &str) -> Result<Self> {
        let suite: Suite = toml::from_str(text).map_err(|e| Error::Format { what: "suite", msg: e.to_string() })?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format { what: "suite", msg });
        if self.configs.is_empty() {
            return bad("no configurations".into());
        }
        for (k, c) in self.configs.iter().enumerate() {
            if self.configs[..k].iter().any(|o| o.name == c.name) {
                return bad(format!("duplicate configuration {:?}", c.name));
            }
            if let Some(a) = c.ablate {
                if a.is_time() != (c.kind == RunKind::Time) {
                    return bad(format!("{}: ablation {} does not fit kind {:?}", c.name, a.name(), c.kind));
                }
            }
        }
        for cmp in &self.comparisons {
            for name in [&cmp.better, &cmp.worse] {
                if !self.configs.iter().any(|c| &c.name == name) {
                    return bad(format!("comparison names unknown configuration {name:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn optim(&self) -> OptimConfig {
        let d = OptimConfig::default();
        OptimConfig {
            iterations: self.iterations,
            seed: self.seed,
            capacity: self.capacity.unwrap_or(d.capacity),
            log_every: 0,
            ..d
        }
    }
}

/// Middle view at every observed frame, blended by consistency weights
/// from the observed pair.
pub fn score_view_model(bundle: &SceneBundle, model: &ViewModel) -> Result<Vec<SampleMetrics>> {
    let scene = &bundle.scene;
    let tex = scene.textures();
    let n = scene.frames;
    (0..n)
        .map(|i| {
            let t = frame_time(i, n);
            let out =
                render_view(model, &bundle.frames[0][i], &bundle.frames[1][i], 0.0, t, BlendMode::Consistency, None)?;
            let m = compute_metrics(&out, &scene.render_at(&tex, 0.0, t)?, EVAL_BORDER)?;
            Ok(SampleMetrics { u: 0.0, t, psnr: m.psnr, ssim: m.ssim })
        })
        .collect()
}

/// Each model's own view at every midpoint between observed frames.
pub fn score_time_models(bundle: &SceneBundle, models: &[TimeModel]) -> Result<Vec<SampleMetrics>> {
    let scene = &bundle.scene;
    let tex = scene.textures();
    let n = scene.frames;
    let mut out = Vec::new();
    for m in models {
        let u = m.side.u();
        for i in 0..n - 1 {
            let t = 0.5 * (frame_time(i, n) + frame_time(i + 1, n));
            let img = render_time(m, &bundle.frames[m.side.index()], t)?;
            let s = compute_metrics(&img, &scene.render_at(&tex, u, t)?, EVAL_BORDER)?;
            out.push(SampleMetrics { u, t, psnr: s.psnr, ssim: s.ssim });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub name: String,
    pub kind: RunKind,
    pub ablate: Option<Ablation>,
    pub aggregate: Aggregate,
    pub samples: Vec<SampleMetrics>,
    /// Mean total loss over the last tenth of the run.
    pub final_loss: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub better: String,
    pub worse: String,
    pub margin_db: f64,
    pub delta_db: f64,
    pub holds: bool,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub scene_seed: u64,
    pub iterations: usize,
    pub results: Vec<RunResult>,
    /// Configuration names by decreasing mean PSNR.
    pub ordering: Vec<String>,
    pub comparisons: Vec<ComparisonResult>,
}

fn tail_mean(history: &[f32]) -> f32 {
    let tail = &history[history.len() - history.len().div_ceil(10)..];
    tail.iter().sum::<f32>() / tail.len().max(1) as f32
}

/// Trains and scores one configuration.
pub fn run_config(
    bundle: &SceneBundle,
    cfg: &OptimConfig,
    config: &SuiteConfig,
    log: &mut dyn FnMut(&LossReport),
) -> Result<RunResult> {
    let (samples, losses) = match config.kind {
        RunKind::View => {
            let mut variant = ViewVariant::default();
            if let Some(a) = config.ablate {
                a.apply_view(&mut variant)?;
            }
            let t = optimize_view(bundle, variant, cfg, None, log)?;
            (score_view_model(bundle, &t.model)?, t.history.iter().map(|h| h.total()).collect::<Vec<_>>())
        }
        RunKind::Time => {
            let mode = config.ablate.map(Ablation::time_mode).transpose()?.unwrap_or(TimeMode::NonUniform);
            let mut models = Vec::new();
            let mut losses = Vec::new();
            for side in Side::BOTH {
                let t = optimize_time(bundle, side, mode, cfg, None, log)?;
                losses.extend(t.history.iter().map(|h| h.total()));
                models.push(t.model);
            }
            (score_time_models(bundle, &models)?, losses)
        }
    };
    let report = MetricsReport::new(bundle.scene.seed, samples);
    Ok(RunResult {
        name: config.name.clone(),
        kind: config.kind,
        ablate: config.ablate,
        aggregate: report.aggregate,
        samples: report.samples,
        final_loss: if losses.is_empty() { 0.0 } else { tail_mean(&losses) },
    })
}

pub fn run_suite(bundle: &SceneBundle, suite: &Suite, progress: &mut dyn FnMut(&RunResult)) -> Result<AblationReport> {
    suite.validate()?;
    let cfg = suite.optim();
    let mut results = Vec::with_capacity(suite.configs.len());
    for c in &suite.configs {
        let r = run_config(bundle, &cfg, c, &mut |_| {})?;
        progress(&r);
        results.push(r);
    }
    let psnr_of = |name: &str| results.iter().find(|r| r.name == name).map(|r| r.aggregate.psnr_mean).unwrap_or(f64::NAN);
    let comparisons = suite
        .comparisons
        .iter()
        .map(|c| {
            let delta = psnr_of(&c.better) - psnr_of(&c.worse);
            ComparisonResult {
                better: c.better.clone(),
                worse: c.worse.clone(),
                margin_db: c.margin_db,
                delta_db: delta,
                holds: delta >= c.margin_db,
            }
        })
        .collect();
    let mut ordering: Vec<&RunResult> = results.iter().collect();
    ordering.sort_by(|a, b| b.aggregate.psnr_mean.total_cmp(&a.aggregate.psnr_mean));
    let ordering = ordering.into_iter().map(|r| r.name.clone()).collect();
    Ok(AblationReport { scene_seed: bundle.scene.seed, iterations: suite.iterations, results, ordering, comparisons })
}
