//! Trains the blending network on a small synthetic corpus and compares it
//! with consistency blending on a held-out scene.
//!
//! cargo run --release --example blender_training -- [iterations]

use sxf::decoder::{train_blender, BlenderConfig, BlenderTrainConfig};
use sxf::pipeline::{compare_blending, corpus_samples};
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions};

fn main() -> sxf::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut train = Vec::new();
    for seed in 0..4 {
        let scene = preset(Preset::BlenderCorpus, &PresetOptions { seed, ..Default::default() })?;
        train.extend(corpus_samples(&emit_bundle(&scene)?)?.into_iter().map(|s| s.triplet));
    }
    let held = corpus_samples(&emit_bundle(&preset(Preset::BlenderCorpus, &PresetOptions { seed: 99, ..Default::default() })?)?)?;

    let cfg = BlenderTrainConfig { iterations, ..Default::default() };
    let net_cfg = BlenderConfig { levels: 3, base_channels: 8, ..Default::default() };
    let (net, _, losses) = train_blender(net_cfg, &cfg, &train)?;
    let head = losses.iter().take(20).sum::<f32>() / 20.0;
    let tail = losses.iter().rev().take(20).sum::<f32>() / 20.0;
    println!("{} training examples, loss {head:.4} -> {tail:.4}", train.len());
    let cmp = compare_blending(&net, &held)?;
    println!("held-out L1: learned {:.4}, consistency {:.4}", cmp.learned_l1, cmp.consistency_l1);
    Ok(())
}
