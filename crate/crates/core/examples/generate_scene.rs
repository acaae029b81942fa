//! Builds a preset scene, writes its bundle and reads it back.
//!
//! cargo run --example generate_scene -- [preset] [out-dir]

use sxf::scenegen::{emit_bundle, generate, read_bundle, Preset, PresetOptions, Side};

fn main() -> sxf::Result<()> {
    let mut args = std::env::args().skip(1);
    let which: Preset = args.next().as_deref().unwrap_or("reference").parse()?;
    let out = args.next().map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("sxf-scene"));

    let scenes = generate(which, &PresetOptions { seed: 7, ..Default::default() }, &out)?;
    let scene = &scenes[0];
    println!("{} {}x{} with {} frames, max disparity {} px", which.name(), scene.height, scene.width, scene.frames, scene.max_disparity);
    println!("plane anchors {:?}", scene.planes.disparities);
    for (k, layer) in scene.layers.iter().enumerate() {
        println!("  layer {k}: {:?} {}x{} d={} z={}", layer.shape, layer.width, layer.height, layer.disparity, layer.z_order);
    }

    if which != Preset::BlenderCorpus {
        let disk = read_bundle(&out)?;
        let fresh = emit_bundle(scene)?;
        let same = disk.frames[0].iter().zip(&fresh.frames[0]).all(|(a, b)| a.data() == b.data());
        println!("regenerated frames match the files: {same}");
        let occluded = disk.occlusion[Side::Left.index()][0].data().iter().filter(|&&v| v == 0.0).count();
        println!("left view, frame 0: {occluded} pixels have no match in the right view");
    }
    println!("bundle written to {}", out.display());
    Ok(())
}
