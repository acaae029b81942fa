use std::collections::BTreeSet;

use proptest::prelude::*;
use sxf::coords::{frame_spacing, frame_time, Branch};
use sxf::geometry::{backward_warp, blend_exact};
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions, Side};
use sxf::tensor::Tensor;
use sxf::training::{optimize_view, OptimConfig, ViewVariant};

fn shape_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f32>)> {
    (1usize..3, 1usize..4, 1usize..7, 1usize..7).prop_flat_map(|(n, c, h, w)| {
        prop::collection::vec(-10.0f32..10.0, n * c * h * w).prop_map(move |d| (vec![n, c, h, w], d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_sample_at_the_identity_grid_is_the_identity((shape, data) in shape_and_data()) {
        let x = Tensor::from_vec(&shape, data).unwrap();
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let xs: Vec<f32> = (0..n * h * w).map(|i| (i % w) as f32).collect();
        let ys: Vec<f32> = (0..n * h * w).map(|i| ((i / w) % h) as f32).collect();
        let out = x
            .grid_sample(&Tensor::from_vec(&[n, 1, h, w], xs).unwrap(), &Tensor::from_vec(&[n, 1, h, w], ys).unwrap())
            .unwrap();
        prop_assert_eq!(out.data(), x.data());
    }

    #[test]
    fn channel_max_backward_conserves_gradient_mass((shape, data) in shape_and_data(), seed in 0u64..1000) {
        let x = Tensor::parameter(&shape, data).unwrap();
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let upstream: Vec<f32> = (0..n * h * w).map(|i| ((i as u64 * 7 + seed) % 11) as f32 - 5.0).collect();
        let (m, _) = x.channel_max().unwrap();
        m.mul(&Tensor::from_vec(&[n, 1, h, w], upstream.clone()).unwrap()).unwrap().sum().backward().unwrap();
        let g = x.grad().unwrap();
        for b in 0..n {
            for p in 0..h * w {
                let total: f32 = (0..c).map(|ch| g[(b * c + ch) * h * w + p]).sum();
                prop_assert_eq!(total, upstream[b * h * w + p]);
            }
        }
    }

    #[test]
    fn blending_identical_images_is_exact(
        (shape, data) in shape_and_data(),
        wl in 0.001f32..0.999,
        c in 0.0f32..=1.0,
    ) {
        let img = Tensor::from_vec(&shape, data).unwrap();
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let l = Tensor::full(&[n, 1, h, w], wl);
        let r = Tensor::full(&[n, 1, h, w], 1.0 - wl);
        let out = blend_exact(&img, &img, &l, &r, c).unwrap();
        prop_assert_eq!(out.data(), img.data());
    }
}

#[test]
fn guidance_disparities_are_exactly_the_visible_layer_disparities() {
    for which in [Preset::Reference, Preset::LargeDisparity, Preset::MotionSpike, Preset::Nonlinear] {
        let scene = preset(which, &PresetOptions::default()).unwrap();
        let bundle = emit_bundle(&scene).unwrap();
        let tex = scene.textures();
        for side in Side::BOTH {
            for i in 0..scene.frames {
                let top = scene.composite(&tex, side.u(), frame_time(i, scene.frames)).unwrap().top;
                let visible: BTreeSet<u32> = top.iter().map(|&l| scene.layers[l as usize].disparity.to_bits()).collect();
                let found: BTreeSet<u32> = bundle.disparity[side.index()][i].data().iter().map(|d| d.to_bits()).collect();
                assert_eq!(found, visible, "{which:?} {side:?} frame {i}");
            }
        }
    }
}

/// Chaining the one-frame flows of two consecutive segments lands where
/// the layer trajectories say, wherever the same layer stays on top.
#[test]
fn oracle_flows_telescope() {
    for which in [Preset::MotionSpike, Preset::Nonlinear] {
        let scene = preset(which, &PresetOptions::default()).unwrap();
        let bundle = emit_bundle(&scene).unwrap();
        let tex = scene.textures();
        let n = scene.frames;
        let (h, w) = (scene.height, scene.width);
        let delta = frame_spacing(n);
        let side = Side::Left;
        let mut checked = 0;
        for i in 0..n - 2 {
            let tops: Vec<Vec<u16>> =
                (i..i + 3).map(|k| scene.composite(&tex, side.u(), frame_time(k, n)).unwrap().top).collect();
            let f1 = bundle.flow(side, i, Branch::Next).unwrap().mul_scalar(delta);
            let f2 = bundle.flow(side, i + 1, Branch::Next).unwrap().mul_scalar(delta);
            // f2 sampled where f1 points, then chained
            let chained = f1.add(&backward_warp(&f2, &f1).unwrap()).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let layer = tops[0][p] as usize;
                    let (dx, dy) = (f1.data()[p], f1.data()[h * w + p]);
                    let (x1, y1) = (x as f32 + dx, y as f32 + dy);
                    // all four bilinear taps must see the same layer
                    let same = [x1.floor(), x1.ceil()].iter().all(|&xx| {
                        [y1.floor(), y1.ceil()].iter().all(|&yy| {
                            (0.0..w as f32).contains(&xx)
                                && (0.0..h as f32).contains(&yy)
                                && tops[1][yy as usize * w + xx as usize] as usize == layer
                        })
                    });
                    if !same {
                        continue;
                    }
                    let l = &scene.layers[layer];
                    let (a, c) = (l.position(i as f64), l.position((i + 2) as f64));
                    let expect = ((c.0 - a.0) as f32, (c.1 - a.1) as f32);
                    let got = (chained.data()[p], chained.data()[h * w + p]);
                    assert!(
                        (got.0 - expect.0).abs() < 1e-4 && (got.1 - expect.1).abs() < 1e-4,
                        "{which:?} frame {i} pixel ({x}, {y}): {got:?} vs {expect:?}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000, "{checked}");
    }
}

fn median(v: &[f32]) -> f32 {
    let mut v = v.to_vec();
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

#[test]
fn view_loss_decreases_for_every_seed_in_the_panel() {
    let bundle = emit_bundle(&preset(Preset::Reference, &PresetOptions::default()).unwrap()).unwrap();
    let iterations = 200;
    for seed in 0..5 {
        let cfg = OptimConfig { iterations, seed, log_every: 0, ..Default::default() };
        let run = optimize_view(&bundle, ViewVariant::default(), &cfg, None, &mut |_| {}).unwrap();
        let totals: Vec<f32> = run.history.iter().map(|h| h.total()).collect();
        let (head, tail) = (median(&totals[..iterations / 10]), median(&totals[iterations * 9 / 10..]));
        assert!(tail < head, "seed {seed}: {tail} vs {head}");
        assert!(totals.iter().all(|t| t.is_finite() && *t >= 0.0));
    }
}
