//! Bilinear resampling: arbitrary-coordinate sampling and fixed 2x upsampling.

use super::{check_same_shape, Result, Tensor, TensorError};

/// Clamped bilinear lookup position along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f32,
    /// Whether the coordinate was inside `[0, len - 1]`; outside, the
    /// clamp makes the value locally constant.
    inside: bool,
}

fn tap(coord: f32, len: usize) -> Tap {
    let max = (len - 1) as f32;
    let inside = (0.0..=max).contains(&coord);
    let c = coord.clamp(0.0, max);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    Tap { i0, i1, frac: c - i0 as f32, inside }
}

impl Tensor {
    /// Samples `self: (N, C, H, W)` at absolute pixel positions given by
    /// `sample_x`, `sample_y: (N, 1, Ho, Wo)`, returning `(N, C, Ho, Wo)`.
    ///
    /// Out-of-range positions clamp to the border (edge replication). The
    /// result is differentiable with respect to the source and to both
    /// coordinate maps.
    pub fn grid_sample(&self, sample_x: &Tensor, sample_y: &Tensor) -> Result<Tensor> {
        check_same_shape("grid_sample", sample_x, sample_y)?;
        let (n, c, h, w) = self.dims4("grid_sample")?;
        let (sn, sc, ho, wo) = sample_x.dims4("grid_sample")?;
        if sn != n || sc != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "grid_sample",
                lhs: self.shape().to_vec(),
                rhs: sample_x.shape().to_vec(),
            });
        }
        let (hw, ohw) = (h * w, ho * wo);
        let taps: Vec<(Tap, Tap)> = sample_x
            .data()
            .iter()
            .zip(sample_y.data())
            .map(|(&x, &y)| (tap(x, w), tap(y, h)))
            .collect();
        let src = self.data();
        let mut out = vec![0.0f32; n * c * ohw];
        for b in 0..n {
            for ch in 0..c {
                let plane = &src[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                let dst = &mut out[(b * c + ch) * ohw..(b * c + ch + 1) * ohw];
                for (o, (tx, ty)) in dst.iter_mut().zip(&taps[b * ohw..(b + 1) * ohw]) {
                    let v00 = plane[ty.i0 * w + tx.i0];
                    let v01 = plane[ty.i0 * w + tx.i1];
                    let v10 = plane[ty.i1 * w + tx.i0];
                    let v11 = plane[ty.i1 * w + tx.i1];
                    let top = (1.0 - tx.frac) * v00 + tx.frac * v01;
                    let bot = (1.0 - tx.frac) * v10 + tx.frac * v11;
                    *o = (1.0 - ty.frac) * top + ty.frac * bot;
                }
            }
        }
        let source = self.clone();
        Ok(Tensor::from_op(
            vec![n, c, ho, wo],
            out,
            vec![self.clone(), sample_x.clone(), sample_y.clone()],
            Box::new(move |g, needs| {
                let src = source.data();
                let mut gsrc = needs[0].then(|| vec![0.0f32; n * c * hw]);
                let mut gx = needs[1].then(|| vec![0.0f32; n * ohw]);
                let mut gy = needs[2].then(|| vec![0.0f32; n * ohw]);
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * hw;
                        for p in 0..ohw {
                            let go = g[(b * c + ch) * ohw + p];
                            if go == 0.0 {
                                continue;
                            }
                            let (tx, ty) = taps[b * ohw + p];
                            let (fx, fy) = (tx.frac, ty.frac);
                            let i00 = base + ty.i0 * w + tx.i0;
                            let i01 = base + ty.i0 * w + tx.i1;
                            let i10 = base + ty.i1 * w + tx.i0;
                            let i11 = base + ty.i1 * w + tx.i1;
                            if let Some(gs) = gsrc.as_mut() {
                                gs[i00] += go * (1.0 - fx) * (1.0 - fy);
                                gs[i01] += go * fx * (1.0 - fy);
                                gs[i10] += go * (1.0 - fx) * fy;
                                gs[i11] += go * fx * fy;
                            }
                            let (v00, v01, v10, v11) = (src[i00], src[i01], src[i10], src[i11]);
                            if let Some(gx) = gx.as_mut() {
                                if tx.inside {
                                    gx[b * ohw + p] +=
                                        go * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
                                }
                            }
                            if let Some(gy) = gy.as_mut() {
                                if ty.inside {
                                    gy[b * ohw + p] +=
                                        go * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
                                }
                            }
                        }
                    }
                }
                vec![gsrc, gx, gy]
            }),
        ))
    }

    /// Doubles height and width with half-pixel-centre bilinear weights
    /// (the `align_corners = false` convention).
    pub fn upsample_bilinear2x(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("upsample_bilinear2x")?;
        if h == 0 || w == 0 {
            return Err(TensorError::BadShape {
                op: "upsample_bilinear2x",
                expected: "non-empty spatial extent",
                got: self.shape().to_vec(),
            });
        }
        let (ho, wo) = (2 * h, 2 * w);
        let ys: Vec<Tap> = (0..ho).map(|i| half_pixel_tap(i, h)).collect();
        let xs: Vec<Tap> = (0..wo).map(|i| half_pixel_tap(i, w)).collect();
        let src = self.data();
        let mut out = vec![0.0f32; n * c * ho * wo];
        for bc in 0..n * c {
            let plane = &src[bc * h * w..(bc + 1) * h * w];
            let dst = &mut out[bc * ho * wo..(bc + 1) * ho * wo];
            for (oy, ty) in ys.iter().enumerate() {
                let r0 = &plane[ty.i0 * w..(ty.i0 + 1) * w];
                let r1 = &plane[ty.i1 * w..(ty.i1 + 1) * w];
                for (ox, tx) in xs.iter().enumerate() {
                    let top = (1.0 - tx.frac) * r0[tx.i0] + tx.frac * r0[tx.i1];
                    let bot = (1.0 - tx.frac) * r1[tx.i0] + tx.frac * r1[tx.i1];
                    dst[oy * wo + ox] = (1.0 - ty.frac) * top + ty.frac * bot;
                }
            }
        }
        Ok(Tensor::from_op(
            vec![n, c, ho, wo],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0f32; n * c * h * w];
                for bc in 0..n * c {
                    let gp = &g[bc * ho * wo..(bc + 1) * ho * wo];
                    let dst = &mut gx[bc * h * w..(bc + 1) * h * w];
                    for (oy, ty) in ys.iter().enumerate() {
                        for (ox, tx) in xs.iter().enumerate() {
                            let go = gp[oy * wo + ox];
                            dst[ty.i0 * w + tx.i0] += go * (1.0 - ty.frac) * (1.0 - tx.frac);
                            dst[ty.i0 * w + tx.i1] += go * (1.0 - ty.frac) * tx.frac;
                            dst[ty.i1 * w + tx.i0] += go * ty.frac * (1.0 - tx.frac);
                            dst[ty.i1 * w + tx.i1] += go * ty.frac * tx.frac;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

fn half_pixel_tap(out_index: usize, len: usize) -> Tap {
    let src = ((out_index as f32 + 0.5) * 0.5 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    Tap { i0, i1, frac: src - i0 as f32, inside: true }
}
