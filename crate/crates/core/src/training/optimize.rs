use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{time_loss, view_loss, LossTerms, OptimConfig, TimeMode, TimeModel, TimeTargets, ViewModel, ViewTargets, ViewVariant};
use crate::coords::EncodingConfig;
use crate::decoder::{build_time_decoder, build_view_decoder, DecoderConfig, ParamStore};
use crate::geometry::PlaneSpec;
use crate::scenegen::{SceneBundle, Side};
use crate::tensor::{adam_step, AdamState, Tensor};
use crate::{Error, Result};

const VIEW_SEED_SALT: u64 = 0x5eed_0001;
const TIME_SEED_SALT: u64 = 0x5eed_0002;

/// One line of the optimization log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub iteration: usize,
    pub sample: String,
    pub lr: f32,
    #[serde(flatten)]
    pub terms: LossTerms,
    pub total: f32,
    /// Mean total loss since the previous report.
    pub running_mean: f32,
}

/// Result of an optimization run.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub adam: AdamState,
    /// Loss terms of every iteration of this run.
    pub history: Vec<LossTerms>,
}

/// Fresh view model for a bundle. The plane layout is the manifest's
/// recommendation when the plane count matches it.
pub fn new_view_model(bundle: &SceneBundle, variant: ViewVariant, cfg: &OptimConfig) -> Result<ViewModel> {
    let scene = &bundle.scene;
    let planes = if variant.planes == scene.planes.len() {
        scene.planes.clone()
    } else {
        PlaneSpec::for_max_disparity(scene.max_disparity, variant.planes)?
    };
    let encoding = EncodingConfig::default();
    let dc = DecoderConfig {
        capacity: cfg.capacity,
        ..DecoderConfig::new(scene.height, scene.width, planes.len(), encoding.view_input_len())
    };
    Ok(ViewModel {
        decoder: build_view_decoder(dc, &planes.disparities, cfg.seed ^ VIEW_SEED_SALT)?,
        planes,
        merge: variant.merge,
        encoding,
        variant,
    })
}

/// Fresh time model for one view. Its raw output is a per-frame
/// displacement, scaled to a per-unit-time Jacobian by the frame count.
pub fn new_time_model(bundle: &SceneBundle, side: Side, mode: TimeMode, cfg: &OptimConfig) -> Result<TimeModel> {
    let scene = &bundle.scene;
    let encoding = EncodingConfig::default();
    let out = if mode == TimeMode::DualJacobian { 4 } else { 2 };
    let dc = DecoderConfig {
        capacity: cfg.capacity,
        output_gain: (scene.frames - 1) as f32,
        ..DecoderConfig::new(scene.height, scene.width, out, encoding.time_input_len())
    };
    let seed = cfg.seed ^ TIME_SEED_SALT ^ ((side.index() as u64) << 32);
    Ok(TimeModel { decoder: build_time_decoder(dc, seed)?, mode, side, frames: scene.frames, encoding })
}

/// Shared loop: uniform seeded sampling, Adam with the stepped schedule,
/// NaN abort. Starts at `adam.step_count`, so a run resumed from a saved
/// optimizer state continues the same sample sequence.
fn run<S>(
    params: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &OptimConfig,
    samples: &[S],
    name: impl Fn(&S) -> String,
    mut loss: impl FnMut(&[Tensor], &S) -> Result<(Tensor, LossTerms)>,
    report: &mut dyn FnMut(&LossReport),
) -> Result<Vec<LossTerms>> {
    if samples.is_empty() {
        return Err(Error::Config("scene has no trainable samples".into()));
    }
    let start = adam.step_count as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..start.min(cfg.iterations) {
        rng.random_range(0..samples.len());
    }
    let mut history = Vec::with_capacity(cfg.iterations.saturating_sub(start));
    let mut window = (0.0f64, 0usize);
    for it in start..cfg.iterations {
        let sample = &samples[rng.random_range(0..samples.len())];
        let leaves = params.bind(true)?;
        let (total, terms) = loss(&leaves, sample)?;
        let value = total.item();
        if !value.is_finite() {
            return Err(Error::NonFinite { iteration: it, sample: name(sample) });
        }
        total.backward()?;
        let grads: Vec<Option<Vec<f32>>> = leaves.iter().map(|l| l.grad()).collect();
        adam.learning_rate = cfg.lr_at(it);
        let mut buffers = params.snapshot();
        adam_step(&mut buffers, &grads, adam)?;
        params.restore(buffers);
        history.push(terms);
        window = (window.0 + value as f64, window.1 + 1);
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            report(&LossReport {
                iteration: it,
                sample: name(sample),
                lr: adam.learning_rate,
                terms,
                total: value,
                running_mean: (window.0 / window.1 as f64) as f32,
            });
            window = (0.0, 0);
        }
    }
    Ok(history)
}

/// Optimizes the view decoder over every (view, frame) pair, continuing
/// from `resume` when given.
pub fn optimize_view(
    bundle: &SceneBundle,
    variant: ViewVariant,
    cfg: &OptimConfig,
    resume: Option<(ViewModel, AdamState)>,
    report: &mut dyn FnMut(&LossReport),
) -> Result<Trained<ViewModel>> {
    let (mut model, mut adam) = match resume {
        Some(state) => state,
        None => {
            let m = new_view_model(bundle, variant, cfg)?;
            let adam = AdamState::new(m.decoder.params().sizes(), cfg.lr);
            (m, adam)
        }
    };
    let targets = ViewTargets::new(bundle, &model.planes)?;
    let (lambda, gamma) = (OptimConfig::lambda(targets.width), OptimConfig::gamma(targets.width));
    let samples: Vec<(Side, usize)> =
        (0..bundle.scene.frames).flat_map(|i| Side::BOTH.into_iter().map(move |s| (s, i))).collect();
    let mut params = std::mem::take(model.decoder.params_mut());
    let history = {
        let m = &model;
        run(
            &mut params,
            &mut adam,
            cfg,
            &samples,
            |&(s, i)| format!("{}{i}", s.letter()),
            |leaves, &(s, i)| view_loss(m, leaves, &targets, s, i, lambda, gamma),
            report,
        )
    };
    *model.decoder.params_mut() = params;
    Ok(Trained { model, adam, history: history? })
}

/// Optimizes one view's time decoder over its interior frames.
pub fn optimize_time(
    bundle: &SceneBundle,
    side: Side,
    mode: TimeMode,
    cfg: &OptimConfig,
    resume: Option<(TimeModel, AdamState)>,
    report: &mut dyn FnMut(&LossReport),
) -> Result<Trained<TimeModel>> {
    let (mut model, mut adam) = match resume {
        Some(state) => state,
        None => {
            let m = new_time_model(bundle, side, mode, cfg)?;
            let adam = AdamState::new(m.decoder.params().sizes(), cfg.lr);
            (m, adam)
        }
    };
    let targets = TimeTargets::new(bundle, model.side)?;
    let lambda = OptimConfig::lambda(bundle.scene.width);
    let samples: Vec<usize> = (1..bundle.scene.frames.saturating_sub(1)).collect();
    let mut params = std::mem::take(model.decoder.params_mut());
    let history = {
        let m = &model;
        run(
            &mut params,
            &mut adam,
            cfg,
            &samples,
            |&i| format!("{}{i}", m.side.letter()),
            |leaves, &i| time_loss(m, leaves, &targets, i, lambda),
            report,
        )
    };
    *model.decoder.params_mut() = params;
    Ok(Trained { model, adam, history: history? })
}
