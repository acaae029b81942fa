//! Optimizes a view network on a small scene and renders the middle view.
//!
//! cargo run --release --example view_synthesis -- [iterations]

use sxf::pipeline::score_view_model;
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions};
use sxf::training::{optimize_view, OptimConfig, ViewVariant};

fn main() -> sxf::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let scene = preset(Preset::Reference, &PresetOptions { size: Some((64, 96)), frames: Some(3), ..Default::default() })?;
    let bundle = emit_bundle(&scene)?;
    let cfg = OptimConfig { iterations, log_every: iterations / 5, ..Default::default() };
    let trained = optimize_view(&bundle, ViewVariant::default(), &cfg, None, &mut |r| {
        println!(
            "it {:5} lr {:.1e}  appearance {:.4}  jacobian {:.4}  plane {:.4}",
            r.iteration, r.lr, r.terms.appearance, r.terms.jacobian, r.terms.plane
        );
    })?;
    for s in score_view_model(&bundle, &trained.model)? {
        println!("u = 0, t = {:.2}: {:.2} dB, SSIM {:.3}", s.t, s.psnr, s.ssim);
    }
    Ok(())
}
