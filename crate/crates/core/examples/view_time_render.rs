//! End to end: optimize all three networks, save and reload them, render
//! the middle of four observed frames and evaluate the midpoint sweep.
//!
//! cargo run --release --example view_time_render -- [iterations]

use sxf::pipeline::{evaluate, midpoint_sweep, thread_budget, write_png, BlendMode, RenderRequest, Renderer};
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions, Side};
use sxf::training::{optimize_time, optimize_view, OptimConfig, SavedModel, TimeMode, Training, ViewVariant};

fn main() -> sxf::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let out = std::env::temp_dir().join("sxf-view-time");
    std::fs::create_dir_all(&out).map_err(|e| sxf::Error::Config(e.to_string()))?;
    let scene = preset(Preset::Reference, &PresetOptions { size: Some((64, 96)), frames: Some(5), ..Default::default() })?;
    let bundle = emit_bundle(&scene)?;
    let cfg = OptimConfig { iterations, log_every: 0, ..Default::default() };

    let view = optimize_view(&bundle, ViewVariant::default(), &cfg, None, &mut |_| {})?;
    SavedModel::View(view.model).save(&out.join("view.sxf"), Some(&view.adam), Some(Training::Optim(&cfg)))?;
    for side in Side::BOTH {
        let t = optimize_time(&bundle, side, TimeMode::NonUniform, &cfg, None, &mut |_| {})?;
        let path = out.join(format!("time{}.sxf", side.letter()));
        SavedModel::Time(t.model).save(&path, Some(&t.adam), Some(Training::Optim(&cfg)))?;
    }

    let renderer = Renderer::load(&out.join("view.sxf"), &out.join("timeL.sxf"), &out.join("timeR.sxf"), None)?;
    let req = RenderRequest::new(0.0, 0.375, BlendMode::Consistency)?;
    write_png(&out.join("mid.png"), &renderer.render(&bundle.frames, &req)?)?;

    let report = evaluate(&bundle, &renderer, &midpoint_sweep(scene.frames), BlendMode::Consistency, thread_budget())?;
    for s in &report.samples {
        println!("u = {:+.2}, t = {:.3}: {:.2} dB, SSIM {:.3}", s.u, s.t, s.psnr, s.ssim);
    }
    println!("mean {:.2} dB; outputs in {}", report.aggregate.psnr_mean, out.display());
    Ok(())
}
