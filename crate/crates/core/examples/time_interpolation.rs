//! Fits time networks with and without non-uniform coordinates on a scene
//! whose motion speeds up for one interval, and scores the mid-frames.
//!
//! cargo run --release --example time_interpolation -- [iterations]
//!
//! Short runs favour the simpler modes; the non-uniform coordinates pull
//! ahead after a few thousand iterations.

use sxf::pipeline::score_time_models;
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions, Side};
use sxf::training::{optimize_time, OptimConfig, TimeMode};

fn main() -> sxf::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let scene = preset(Preset::MotionSpike, &PresetOptions { frames: Some(7), ..Default::default() })?;
    let bundle = emit_bundle(&scene)?;
    let cfg = OptimConfig { iterations, log_every: 0, ..Default::default() };
    for mode in [TimeMode::NonUniform, TimeMode::SingleJacobian, TimeMode::DualJacobian] {
        let trained = optimize_time(&bundle, Side::Left, mode, &cfg, None, &mut |_| {})?;
        let scores = score_time_models(&bundle, &[trained.model])?;
        let mean = scores.iter().map(|s| s.psnr).sum::<f64>() / scores.len() as f64;
        let per: Vec<String> = scores.iter().map(|s| format!("{:.1}", s.psnr)).collect();
        println!("{mode:?}: mean {mean:.2} dB  [{}]", per.join(" "));
    }
    Ok(())
}
