//! Runs a small ablation suite and prints the ordering table.
//!
//! cargo run --release --example ablation_suite -- [iterations]
//!
//! Margins need a few thousand iterations to open up.

use sxf::pipeline::{run_suite, Suite};
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions};

fn main() -> sxf::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let suite = Suite::parse(&format!(
        r#"
iterations = {iterations}

[[config]]
name = "multi-plane"

[[config]]
name = "single-plane"
ablate = "single-plane"

[[config]]
name = "sum-merge"
ablate = "sum-merge"

[[compare]]
better = "multi-plane"
worse = "single-plane"
margin_db = 0.5
"#
    ))?;
    let scene = preset(Preset::LargeDisparity, &PresetOptions { frames: Some(3), ..Default::default() })?;
    let bundle = emit_bundle(&scene)?;
    let report = run_suite(&bundle, &suite, &mut |r| println!("{:>14}: {:.2} dB", r.name, r.aggregate.psnr_mean))?;
    println!("ordering: {}", report.ordering.join(" > "));
    for c in &report.comparisons {
        println!("{} vs {}: {:+.2} dB (needs {:+.2}) {}", c.better, c.worse, c.delta_db, c.margin_db, if c.holds { "holds" } else { "fails" });
    }
    Ok(())
}
