//! Warps one view into the other with the oracle disparity, compares the
//! consistency-derived occlusion mask with the exact one, and splits the
//! disparity map into plane bands.

use sxf::coords::{frame_time, LEFT_U, RIGHT_U};
use sxf::geometry::{backward_warp, decompose_guidance, occlusion_mask_from_guidance, view_flow};
use sxf::pipeline::psnr;
use sxf::scenegen::{emit_bundle, preset, Preset, PresetOptions, Side};

fn main() -> sxf::Result<()> {
    let scene = preset(Preset::Reference, &PresetOptions::default())?;
    let bundle = emit_bundle(&scene)?;
    let i = scene.frames / 2;
    let (left, right) = (bundle.frame(Side::Left, i), bundle.frame(Side::Right, i));
    let j_left = &bundle.disparity[0][i];

    // sample the right view at the positions the left pixels land on
    let warped = backward_warp(right, &view_flow(j_left, LEFT_U, RIGHT_U))?;
    let visible = &bundle.occlusion[0][i];
    println!("right -> left warp, visible pixels: {:.1} dB", psnr(&warped, left, 0, Some(visible))?);
    println!("right -> left warp, all pixels:     {:.1} dB", psnr(&warped, left, 0, None)?);

    let (derived, _) = occlusion_mask_from_guidance(j_left, &bundle.disparity[1][i], 0.5)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in derived.data().iter().zip(visible.data()) {
        let (oa, ob) = (*a == 0.0, *b == 0.0);
        inter += (oa && ob) as usize;
        union += (oa || ob) as usize;
    }
    println!("occlusion IoU, consistency check vs exact: {:.3}", inter as f64 / union.max(1) as f64);

    let (_, masks) = decompose_guidance(j_left, &scene.planes)?;
    let hw = scene.height * scene.width;
    for (k, d) in scene.planes.disparities.iter().enumerate() {
        let count = masks.data()[k * hw..(k + 1) * hw].iter().filter(|&&m| m > 0.0).count();
        println!("plane {k} (anchor {d:>4}): {count:5} pixels");
    }
    println!("frame time of frame {i}: {}", frame_time(i, scene.frames));
    Ok(())
}
