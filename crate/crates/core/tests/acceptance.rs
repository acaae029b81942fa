//! Acceptance suite: one pass/fail line per criterion.
//!
//! `SXF_ACCEPTANCE=1,3` restricts the run to the listed criteria.

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sxf::coords::{frame_time, Branch, LEFT_U, RIGHT_U};
use sxf::geometry::{
    backward_warp, consistency_weights, decompose_guidance, merge_planes, shift_plane, shifted_planes, view_flow,
    MergeMode, PlaneSpec,
};
use sxf::pipeline::{
    psnr, run_config, score_view_model, BlendMode, RenderRequest, Renderer, SuiteConfig, RunKind,
    EVAL_BORDER,
};
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions, SceneBundle, Side};
use sxf::tensor::{gradcheck, Tensor};
use sxf::training::{optimize_time, optimize_view, Ablation, OptimConfig, SavedModel, TimeMode, TimeModel, ViewModel, ViewVariant};

// criterion 1
const GRAD_TOL: f64 = 1e-3;
const GRAD_TRIALS: u64 = 20;
const CONV_TOL: f32 = 1e-5;
const AUTODIFF_BUDGET: Duration = Duration::from_secs(120);
// criterion 2
const WARP_PSNR_MIN: f64 = 40.0;
const IOU_MIN: f64 = 0.9;
/// Consistency weight below which a pixel counts as occluded.
const OCC_THRESHOLD: f32 = 0.5;
const GEOMETRY_BUDGET: Duration = Duration::from_secs(60);
// criterion 3
const VIEW_ITERS: usize = 20_000;
const VIEW_PSNR_MIN: f64 = 30.0;
// criterion 4
const ABLATION_VIEW_ITERS: usize = 4000;
const VIEW_MARGIN_DB: f64 = 0.5;
// criterion 5
const ABLATION_TIME_ITERS: usize = 6000;
const SINGLE_MARGIN_DB: f64 = 0.3;
const DUAL_MARGIN_DB: f64 = 0.2;
// criterion 6
const TRACK_ERR_MAX: f64 = 0.10;
const SINGLE_ERR_MIN: f64 = 0.25;
// criterion 7
const TIME_ITERS: usize = 3000;
const CORNER_TOL: f32 = 1e-6;
const MIDPOINT_PSNR_MIN: f64 = 28.0;
// criterion 8
const SMOKE_ITERS: usize = 30;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bundle_of(which: Preset) -> SceneBundle {
    emit_bundle(&preset(which, &PresetOptions::default()).unwrap()).unwrap()
}

/// Trained models shared between criteria.
#[derive(Default)]
struct Shared {
    reference: OnceCell<SceneBundle>,
    reference_view: OnceCell<ViewModel>,
    spike: OnceCell<SceneBundle>,
    spike_time: OnceCell<Vec<(TimeMode, Vec<TimeModel>)>>,
}

impl Shared {
    fn reference(&self) -> &SceneBundle {
        self.reference.get_or_init(|| bundle_of(Preset::Reference))
    }

    fn reference_view(&self) -> &ViewModel {
        self.reference_view.get_or_init(|| {
            let cfg = OptimConfig { iterations: VIEW_ITERS, log_every: 0, ..Default::default() };
            optimize_view(self.reference(), ViewVariant::default(), &cfg, None, &mut |_| {}).unwrap().model
        })
    }

    fn spike(&self) -> &SceneBundle {
        self.spike.get_or_init(|| bundle_of(Preset::MotionSpike))
    }

    fn spike_models(&self, mode: TimeMode) -> &[TimeModel] {
        let all = self.spike_time.get_or_init(|| {
            let cfg = OptimConfig { iterations: ABLATION_TIME_ITERS, log_every: 0, ..Default::default() };
            [TimeMode::NonUniform, TimeMode::SingleJacobian, TimeMode::DualJacobian]
                .into_iter()
                .map(|mode| {
                    let models = Side::BOTH
                        .into_iter()
                        .map(|side| optimize_time(self.spike(), side, mode, &cfg, None, &mut |_| {}).unwrap().model)
                        .collect();
                    (mode, models)
                })
                .collect()
        });
        &all.iter().find(|(m, _)| *m == mode).unwrap().1
    }
}

// ---------------------------------------------------------------- criterion 1

fn random(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

type OpCase = (&'static str, fn(&mut ChaCha8Rng) -> (Vec<(Vec<usize>, Vec<f32>)>, OpFn));
type OpFn = Box<dyn Fn(&[Tensor]) -> sxf::tensor::Result<Tensor>>;

fn dims(rng: &mut ChaCha8Rng) -> Vec<usize> {
    vec![rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..5), rng.random_range(2..5)]
}

// Inputs stay in [-1, 1]: the outputs are f32, so a reduction over many
// large values loses the 1e-3 step to rounding.
fn one(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Vec<(Vec<usize>, Vec<f32>)> {
    let s = dims(rng);
    let n = s.iter().product();
    vec![(s, random(rng, n, lo, hi))]
}

fn two(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Vec<(Vec<usize>, Vec<f32>)> {
    let s = dims(rng);
    let n: usize = s.iter().product();
    vec![(s.clone(), random(rng, n, -1.0, 1.0)), (s, random(rng, n, lo, hi))]
}

fn op_cases() -> Vec<OpCase> {
    vec![
        ("add", |r| (two(r, -1.0, 1.0), Box::new(|x| x[0].add(&x[1])))),
        ("sub", |r| (two(r, -1.0, 1.0), Box::new(|x| x[0].sub(&x[1])))),
        ("mul", |r| (two(r, -1.0, 1.0), Box::new(|x| x[0].mul(&x[1])))),
        ("div", |r| (two(r, 0.5, 2.0), Box::new(|x| x[0].div(&x[1])))),
        ("max2", |r| (two(r, -1.0, 1.0), Box::new(|x| x[0].max2(&x[1])))),
        ("add_scalar", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].add_scalar(0.7))))),
        ("mul_scalar", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].mul_scalar(-1.3))))),
        ("abs", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].abs())))),
        ("leaky_relu", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].leaky_relu())))),
        ("sigmoid", |r| (one(r, -3.0, 3.0), Box::new(|x| Ok(x[0].sigmoid())))),
        ("tanh", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].tanh())))),
        ("sum", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].sum())))),
        ("mean", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].mean())))),
        ("mean_abs", |r| (one(r, -1.0, 1.0), Box::new(|x| x[0].mean_abs(None)))),
        ("mean_abs_masked", |r| {
            let inputs = one(r, -1.0, 1.0);
            let mask: Vec<f32> = (0..inputs[0].1.len()).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
            let shape = inputs[0].0.clone();
            (inputs, Box::new(move |x| x[0].mean_abs(Some(&Tensor::from_vec(&shape, mask.clone())?))))
        }),
        ("channel_max", |r| (one(r, -1.0, 1.0), Box::new(|x| Ok(x[0].channel_max()?.0)))),
        ("channel_sum", |r| (one(r, -1.0, 1.0), Box::new(|x| x[0].channel_sum()))),
        ("concat_channels", |r| (two(r, -1.0, 1.0), Box::new(|x| Tensor::concat_channels(&[&x[0], &x[1]])))),
        ("slice_channels", |r| {
            let inputs = one(r, -1.0, 1.0);
            let c = inputs[0].0[1];
            let start = r.random_range(0..c);
            let len = r.random_range(1..=c - start);
            (inputs, Box::new(move |x| x[0].slice_channels(start, len)))
        }),
        ("repeat_channels", |r| (one(r, -1.0, 1.0), Box::new(|x| x[0].slice_channels(0, 1)?.repeat_channels(3)))),
        ("channel_affine", |r| {
            let mut inputs = one(r, -1.0, 1.0);
            let s = &inputs[0].0;
            let aff = vec![s[0], s[1], 1, 1];
            let n = s[0] * s[1];
            inputs.push((aff.clone(), random(r, n, -1.0, 1.0)));
            inputs.push((aff, random(r, n, -1.0, 1.0)));
            (inputs, Box::new(|x| x[0].channel_affine(&x[1], &x[2])))
        }),
        ("conv2d", |r| {
            let (input, weight, bias, stride, padding) = conv_case(r);
            (vec![input, weight, bias], Box::new(move |x| x[0].conv2d(&x[1], &x[2], stride, padding)))
        }),
        ("grid_sample", |r| {
            let src = one(r, -1.0, 1.0).remove(0);
            let (n, h, w) = (src.0[0], src.0[2], src.0[3]);
            let (ho, wo) = (r.random_range(1..4), r.random_range(1..4));
            let shape = vec![n, 1, ho, wo];
            let sx = random(r, n * ho * wo, -0.5, w as f32 - 0.5);
            let sy = random(r, n * ho * wo, -0.5, h as f32 - 0.5);
            (vec![src, (shape.clone(), sx), (shape, sy)], Box::new(|x| x[0].grid_sample(&x[1], &x[2])))
        }),
        ("upsample_bilinear2x", |r| (one(r, -1.0, 1.0), Box::new(|x| x[0].upsample_bilinear2x()))),
        ("reshape", |r| {
            let inputs = one(r, -1.0, 1.0);
            let n = inputs[0].1.len();
            (inputs, Box::new(move |x| Ok(x[0].reshape(&[n])?.mul_scalar(2.0))))
        }),
    ]
}

#[allow(clippy::type_complexity)]
fn conv_case(r: &mut ChaCha8Rng) -> ((Vec<usize>, Vec<f32>), (Vec<usize>, Vec<f32>), (Vec<usize>, Vec<f32>), usize, usize) {
    let (n, cin, cout) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
    let k = r.random_range(1..4);
    let (h, w) = (r.random_range(k..k + 4), r.random_range(k..k + 4));
    let (stride, padding) = (r.random_range(1..3), r.random_range(0..2));
    (
        (vec![n, cin, h, w], random(r, n * cin * h * w, -1.0, 1.0)),
        (vec![cout, cin, k, k], random(r, cout * cin * k * k, -1.0, 1.0)),
        (vec![cout], random(r, cout, -1.0, 1.0)),
        stride,
        padding,
    )
}

/// Direct zero-padded cross-correlation.
fn conv_oracle(x: &(Vec<usize>, Vec<f32>), wt: &(Vec<usize>, Vec<f32>), b: &[f32], stride: usize, pad: usize) -> Vec<f32> {
    let (n, cin, h, w) = (x.0[0], x.0[1], x.0[2], x.0[3]);
    let (cout, k) = (wt.0[0], wt.0[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(n * cout * ho * wo);
    for bn in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co] as f64;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.1[((bn * cin + ci) * h + iy as usize) * w + ix as usize];
                                let wv = wt.1[((co * cin + ci) * k + ky) * k + kx];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    out
}

fn criterion_autodiff(_: &Shared) -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut kinks = 0;
    for (k, (name, case)) in op_cases().into_iter().enumerate() {
        for trial in 0..GRAD_TRIALS {
            let mut rng = ChaCha8Rng::seed_from_u64(((k as u64) << 16) | trial);
            let (inputs, f) = case(&mut rng);
            let report = gradcheck(f, &inputs, GRAD_TOL).map_err(err)?;
            ensure(report.passed(), || format!("{name} trial {trial}: max rel error {:.2e}", report.max_rel_error))?;
            kinks += report.kink_count();
            if report.max_rel_error > worst.0 {
                worst = (report.max_rel_error, name);
            }
        }
    }
    let mut conv_err = 0.0f32;
    for trial in 0..GRAD_TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0_0000 | trial);
        let (x, wt, b, stride, pad) = conv_case(&mut rng);
        let expected = conv_oracle(&x, &wt, &b.1, stride, pad);
        let got = Tensor::from_vec(&x.0, x.1.clone())
            .unwrap()
            .conv2d(&Tensor::from_vec(&wt.0, wt.1.clone()).unwrap(), &Tensor::from_vec(&b.0, b.1.clone()).unwrap(), stride, pad)
            .map_err(err)?;
        ensure(got.numel() == expected.len(), || format!("conv2d output size {:?}", got.shape()))?;
        for (a, e) in got.data().iter().zip(&expected) {
            conv_err = conv_err.max((a - e).abs());
        }
    }
    ensure(conv_err <= CONV_TOL, || format!("conv2d differs from the direct loop by {conv_err:.2e}"))?;
    let took = start.elapsed();
    ensure(took <= AUTODIFF_BUDGET, || format!("took {took:.1?}"))?;
    Ok(format!(
        "{} ops x {GRAD_TRIALS} trials, worst rel error {:.2e} ({}), {kinks} kinks skipped; conv2d max abs error {conv_err:.1e}",
        op_cases().len(),
        worst.0,
        worst.1
    ))
}

// ---------------------------------------------------------------- criterion 2

fn row_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(&[1, c, h, w], random(rng, c * h * w, 0.0, 1.0)).unwrap()
}

/// Non-overlapping rectangles on a zero background, at anchor disparities.
struct RectScene {
    h: usize,
    w: usize,
    rects: Vec<(usize, usize, usize, usize, f32)>,
}

impl RectScene {
    fn random(rng: &mut ChaCha8Rng, spec: &PlaneSpec) -> Self {
        let (h, w) = (24, 64);
        let mut rects: Vec<(usize, usize, usize, usize, f32)> = Vec::new();
        while rects.len() < 4 {
            let (rw, rh) = (rng.random_range(4..14), rng.random_range(4..12));
            let (x, y) = (rng.random_range(12..w - 12 - rw), rng.random_range(0..h - rh));
            let d = spec.disparities[rng.random_range(1..spec.len())];
            let clear = rects.iter().all(|&(ox, oy, ow, oh, _)| x + rw <= ox || ox + ow <= x || y + rh <= oy || oy + oh <= y);
            if clear {
                rects.push((x, y, rw, rh, d));
            }
        }
        Self { h, w, rects }
    }

    /// Disparity at view `u`: each rectangle moved by `-d·u`, nearest on top.
    fn disparity(&self, u: f32) -> Vec<f32> {
        let mut out = vec![0.0f32; self.h * self.w];
        for &(x, y, rw, rh, d) in &self.rects {
            let dx = -(d * u);
            assert_eq!(dx.fract(), 0.0);
            for yy in y..y + rh {
                for xx in x..x + rw {
                    let xs = xx as isize + dx as isize;
                    if (0..self.w as isize).contains(&xs) {
                        let p = &mut out[yy * self.w + xs as usize];
                        *p = p.max(d);
                    }
                }
            }
        }
        out
    }
}

fn criterion_geometry(shared: &Shared) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // identity warp
    let img = row_image(&mut rng, 3, 9, 13);
    let id = backward_warp(&img, &Tensor::zeros(&[1, 2, 9, 13])).map_err(err)?;
    ensure(id.data() == img.data(), || "zero flow changed the image".into())?;
    // integer shifts match index arithmetic with edge replication
    for shift in [-3i32, -1, 2, 5] {
        let w = 13;
        let warped = backward_warp(&img, &Tensor::full(&[1, 1, 9, w], shift as f32)).map_err(err)?;
        let shifted = shift_plane(&img, shift as f32).map_err(err)?;
        for (i, (&a, &b)) in warped.data().iter().zip(shifted.data()).enumerate() {
            let (row, x) = (i / w, (i % w) as i32);
            let src = (x + shift).clamp(0, w as i32 - 1) as usize;
            let e = img.data()[row * w + src];
            ensure(a == e && b == e, || format!("shift {shift} at flat index {i}: {a} / {b} vs {e}"))?;
        }
    }
    // band partition
    let spec = PlaneSpec::for_max_disparity(24.0, 6).map_err(err)?;
    for _ in 0..GRAD_TRIALS {
        let g = Tensor::from_vec(&[1, 1, 8, 8], random(&mut rng, 64, -5.0, 40.0)).unwrap();
        let (values, masks) = decompose_guidance(&g, &spec).map_err(err)?;
        for p in 0..64 {
            let owners: Vec<usize> = (0..spec.len()).filter(|&k| masks.data()[k * 64 + p] == 1.0).collect();
            ensure(owners.len() == 1, || format!("pixel {p} belongs to planes {owners:?}"))?;
            let (lo, hi) = spec.band(owners[0]);
            let v = g.data()[p];
            ensure(v >= lo && v < hi && values.data()[owners[0] * 64 + p] == v, || format!("pixel {p} misplaced"))?;
        }
    }
    // decompose, shift and max-merge reproduces the disparity at other views
    for _ in 0..GRAD_TRIALS {
        let scene = RectScene::random(&mut rng, &spec);
        let centre = Tensor::from_vec(&[1, 1, scene.h, scene.w], scene.disparity(0.0)).unwrap();
        let (values, _) = decompose_guidance(&centre, &spec).map_err(err)?;
        for u in [LEFT_U, RIGHT_U] {
            let merged = merge_planes(&shifted_planes(&values, &spec, u).map_err(err)?, MergeMode::Max).map_err(err)?;
            ensure(merged.data() == scene.disparity(u).as_slice(), || format!("max-merge at u = {u} differs"))?;
        }
    }
    // guidance warps between the observed views, and consistency weights
    // find the occluded pixels
    let bundle = shared.reference();
    let scene = &bundle.scene;
    let tex = scene.textures();
    let mut worst_psnr = f64::INFINITY;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..scene.frames {
        let (jl, jr) = (&bundle.disparity[0][i], &bundle.disparity[1][i]);
        let (left, right) = (&bundle.frames[0][i], &bundle.frames[1][i]);
        let to_left = view_flow(jr, RIGHT_U, LEFT_U);
        let to_right = view_flow(jl, LEFT_U, RIGHT_U);
        let (occ_l, occ_r) = scene.occlusion_masks(&tex, frame_time(i, scene.frames)).map_err(err)?;
        let r_hat = backward_warp(left, &to_left).map_err(err)?;
        let l_hat = backward_warp(right, &to_right).map_err(err)?;
        worst_psnr = worst_psnr
            .min(psnr(&r_hat, right, 0, Some(&occ_r)).map_err(err)?)
            .min(psnr(&l_hat, left, 0, Some(&occ_l)).map_err(err)?);
        let wl = consistency_weights(&to_right, &to_left, 1.0).map_err(err)?;
        let wr = consistency_weights(&to_left, &to_right, 1.0).map_err(err)?;
        for (w, exact) in [(&wl, &occ_l), (&wr, &occ_r)] {
            for (&wv, &ev) in w.data().iter().zip(exact.data()) {
                let (a, b) = (wv < OCC_THRESHOLD, ev == 0.0);
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
        }
    }
    let iou = inter as f64 / union.max(1) as f64;
    ensure(worst_psnr >= WARP_PSNR_MIN, || format!("round-trip warp PSNR {worst_psnr:.2} dB"))?;
    ensure(iou >= IOU_MIN, || format!("occlusion IoU {iou:.3}"))?;
    let took = start.elapsed();
    ensure(took <= GEOMETRY_BUDGET, || format!("took {took:.1?}"))?;
    Ok(format!("warp PSNR >= {worst_psnr:.2} dB outside occlusions, occlusion IoU {iou:.3} ({union} px)"))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_view(shared: &Shared) -> Outcome {
    let start = Instant::now();
    let model = shared.reference_view();
    let samples = score_view_model(shared.reference(), model).map_err(err)?;
    let mean = samples.iter().map(|s| s.psnr).sum::<f64>() / samples.len() as f64;
    let lo = samples.iter().map(|s| s.psnr).fold(f64::INFINITY, f64::min);
    ensure(mean >= VIEW_PSNR_MIN, || format!("mean PSNR {mean:.2} dB (min {lo:.2})"))?;
    Ok(format!("mean PSNR {mean:.2} dB over {} frames (min {lo:.2}), {VIEW_ITERS} iterations in {:.0?}", samples.len(), start.elapsed()))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_view_ablation(_: &Shared) -> Outcome {
    let bundle = bundle_of(Preset::LargeDisparity);
    let cfg = OptimConfig { iterations: ABLATION_VIEW_ITERS, log_every: 0, ..Default::default() };
    let score = |ablate: Option<Ablation>| -> Result<f64, String> {
        let config = SuiteConfig { name: "x".into(), kind: RunKind::View, ablate };
        Ok(run_config(&bundle, &cfg, &config, &mut |_| {}).map_err(err)?.aggregate.psnr_mean)
    };
    let base = score(None)?;
    let mut lines = vec![format!("base {base:.2}")];
    let mut failures = Vec::new();
    for a in [Ablation::SinglePlane, Ablation::SumMerge, Ablation::NoPlaneReg] {
        let p = score(Some(a))?;
        lines.push(format!("{} {p:.2}", a.name()));
        if base - p < VIEW_MARGIN_DB {
            failures.push(format!("{} is only {:.2} dB below base", a.name(), base - p));
        }
    }
    let summary = lines.join(", ");
    ensure(failures.is_empty(), || format!("{}; {summary}", failures.join("; ")))?;
    Ok(summary)
}

// ---------------------------------------------------------------- criterion 5

fn mean_midpoint_psnr(bundle: &SceneBundle, models: &[TimeModel]) -> Result<f64, String> {
    let s = sxf::pipeline::score_time_models(bundle, models).map_err(err)?;
    Ok(s.iter().map(|x| x.psnr).sum::<f64>() / s.len() as f64)
}

fn criterion_time_ablation(shared: &Shared) -> Outcome {
    let b = shared.spike();
    let nu = mean_midpoint_psnr(b, shared.spike_models(TimeMode::NonUniform))?;
    let single = mean_midpoint_psnr(b, shared.spike_models(TimeMode::SingleJacobian))?;
    let dual = mean_midpoint_psnr(b, shared.spike_models(TimeMode::DualJacobian))?;
    let summary = format!("non-uniform {nu:.2}, single {single:.2}, dual {dual:.2} dB");
    ensure(nu - single >= SINGLE_MARGIN_DB && nu - dual >= DUAL_MARGIN_DB, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- criterion 6

fn mean_magnitude(j: &Tensor) -> f64 {
    let d = j.data();
    let hw = d.len() / 2;
    (0..hw).map(|i| (d[i] as f64).hypot(d[hw + i] as f64)).sum::<f64>() / hw as f64
}

/// Per (side, frame, branch): guidance and encoded mean flow magnitude.
fn tracking(bundle: &SceneBundle, models: &[TimeModel]) -> Vec<(f64, f64)> {
    let n = bundle.scene.frames;
    let mut out = Vec::new();
    for m in models {
        let leaves = m.decoder.params().bind(false).unwrap();
        for i in 0..n {
            for br in [Branch::Next, Branch::Prev] {
                if let Ok(g) = bundle.flow(m.side, i, br) {
                    let enc = m.branch(&leaves, frame_time(i, n), br).unwrap();
                    out.push((mean_magnitude(g), mean_magnitude(&enc)));
                }
            }
        }
    }
    out
}

fn criterion_tracking(shared: &Shared) -> Outcome {
    let b = shared.spike();
    let nu = tracking(b, shared.spike_models(TimeMode::NonUniform));
    let single = tracking(b, shared.spike_models(TimeMode::SingleJacobian));
    let spike = nu.iter().map(|p| p.0).fold(0.0, f64::max);
    let nu_err = nu.iter().map(|(g, e)| (g - e).abs()).sum::<f64>() / nu.len() as f64 / spike;
    // entries at the fast segment
    let single_err = single
        .iter()
        .filter(|(g, _)| *g >= 0.5 * spike)
        .map(|(g, e)| (g - e).abs() / spike)
        .fold(f64::INFINITY, f64::min);
    let summary = format!(
        "non-uniform mean error {:.1}% of spike, single-Jacobian error at the spike {:.1}%",
        100.0 * nu_err,
        100.0 * single_err
    );
    ensure(nu_err <= TRACK_ERR_MAX && single_err > SINGLE_ERR_MIN, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- criterion 7

fn criterion_view_time(shared: &Shared) -> Outcome {
    let bundle = shared.reference();
    let scene = &bundle.scene;
    let cfg = OptimConfig { iterations: TIME_ITERS, log_every: 0, ..Default::default() };
    let time: Vec<TimeModel> = Side::BOTH
        .into_iter()
        .map(|side| optimize_time(bundle, side, TimeMode::NonUniform, &cfg, None, &mut |_| {}).map(|t| t.model))
        .collect::<sxf::Result<_>>()
        .map_err(err)?;
    let [tl, tr]: [TimeModel; 2] = time.try_into().unwrap();
    let renderer = Renderer::new(shared.reference_view().clone(), tl, tr, None).map_err(err)?;
    let mut corner_err = 0.0f32;
    for side in Side::BOTH {
        for i in [0, scene.frames - 1] {
            let req = RenderRequest::new(side.u(), frame_time(i, scene.frames), BlendMode::Consistency).map_err(err)?;
            let out = renderer.render(&bundle.frames, &req).map_err(err)?;
            for (a, b) in out.data().iter().zip(bundle.frame(side, i).data()) {
                corner_err = corner_err.max((a - b).abs());
            }
        }
    }
    ensure(corner_err <= CORNER_TOL, || format!("corner error {corner_err:.2e}"))?;
    let tex = scene.textures();
    let coords = sxf::pipeline::midpoint_sweep(scene.frames);
    let (u, t) = coords[coords.len() / 2];
    let out = renderer.render(&bundle.frames, &RenderRequest::new(u, t, BlendMode::Consistency).map_err(err)?).map_err(err)?;
    let p = psnr(&out, &scene.render_at(&tex, u, t).map_err(err)?, EVAL_BORDER, None).map_err(err)?;
    ensure(p >= MIDPOINT_PSNR_MIN, || format!("midpoint (u={u}, t={t}) PSNR {p:.2} dB"))?;
    Ok(format!("corners within {corner_err:.1e}, midpoint (u={u}, t={t}) PSNR {p:.2} dB"))
}

// ---------------------------------------------------------------- criterion 8

fn sxf(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sxf")).args(args).output().map_err(err)?;
    ensure(out.status.success(), || format!("sxf {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

/// generate, optimize and render in `dir`; returns the produced files.
fn end_to_end(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let iters = SMOKE_ITERS.to_string();
    sxf(&["generate", "--preset", "motion-spike", "--out", &p("scene"), "--seed", "7", "--frames", "3", "--size", "32x64"])?;
    sxf(&["optimize", "--scene", &p("scene"), "--kind", "view", "--out", &p("view.sxf"), "--iters", &iters, "--seed", "3"])?;
    for side in ["left", "right"] {
        let out = p(&format!("time_{side}.sxf"));
        sxf(&["optimize", "--scene", &p("scene"), "--kind", "time", "--side", side, "--out", &out, "--iters", &iters, "--seed", "3"])?;
    }
    let (view, tl, tr) = (p("view.sxf"), p("time_left.sxf"), p("time_right.sxf"));
    sxf(&["render", "--scene", &p("scene"), "--view", &view, "--timeL", &tl, "--timeR", &tr, "--u", "-0.2", "--t", "0.3", "--out", &p("out.png")])?;
    ["view.sxf", "time_left.sxf", "time_right.sxf", "out.png"]
        .iter()
        .map(|f| Ok((f.to_string(), std::fs::read(dir.join(f)).map_err(err)?)))
        .collect()
}

fn criterion_determinism(_: &Shared) -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let first = end_to_end(a.path())?;
    let second = end_to_end(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{name} differs between seeded runs"))?;
    }
    // a reloaded checkpoint renders what the in-memory model rendered
    let bundle = sxf::scenegen::read_bundle(&a.path().join("scene")).map_err(err)?;
    let cfg = OptimConfig { iterations: SMOKE_ITERS, seed: 3, log_every: 0, ..Default::default() };
    let trained = optimize_view(&bundle, ViewVariant::default(), &cfg, None, &mut |_| {}).map_err(err)?;
    let path = a.path().join("memory.sxf");
    SavedModel::View(trained.model.clone()).save(&path, Some(&trained.adam), None).map_err(err)?;
    let reloaded = SavedModel::load(&path).map_err(err)?.into_view().map_err(err)?;
    let render = |m: &ViewModel| {
        sxf::pipeline::render_view(m, &bundle.frames[0][1], &bundle.frames[1][1], 0.1, 0.5, BlendMode::Consistency, None)
    };
    let (x, y) = (render(&trained.model).map_err(err)?, render(&reloaded).map_err(err)?);
    ensure(x.data() == y.data(), || "reloaded view network renders differently".into())?;
    Ok(format!("{} artifacts bit-identical across runs; reload renders identically", first.len()))
}

// ----------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn(&Shared) -> Outcome); 8] = [
        (1, "autodiff soundness", criterion_autodiff),
        (2, "geometry oracles", criterion_geometry),
        (3, "view synthesis", criterion_view),
        (4, "view ablation ordering", criterion_view_ablation),
        (5, "time ablation ordering", criterion_time_ablation),
        (6, "motion-spike tracking", criterion_tracking),
        (7, "view-time corners and midpoint", criterion_view_time),
        (8, "determinism and persistence", criterion_determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("SXF_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let shared = Shared::default();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&shared)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{took:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why} [{took:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
