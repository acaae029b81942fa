//! Weighted blending of two warped images at interpolation factor `c`.
//!
//! The left image gets `a = (1 - c)·W_l` and the right `b = c·W_r`; the
//! result is `(a·I_l + b·I_r) / (a + b)`, falling back to the plain linear
//! weights where both vanish.

use crate::tensor::Tensor;
use crate::{Error, Result};

fn check(il: &Tensor, ir: &Tensor, wl: &Tensor, wr: &Tensor, c: f32) -> Result<usize> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::OutOfRange(format!("blend factor {c} outside [0, 1]")));
    }
    let (n, ch, h, w) = il.dims4("blend")?;
    if ir.shape() != il.shape() {
        return Err(Error::Config(format!("blend images differ: {:?} vs {:?}", il.shape(), ir.shape())));
    }
    for wt in [wl, wr] {
        if wt.shape() != [n, 1, h, w] {
            return Err(Error::Config(format!("blend weight {:?} does not match image {:?}", wt.shape(), il.shape())));
        }
    }
    Ok(ch)
}

/// Per-pixel share of the left image, `(N, 1, H, W)`. Differentiable in the
/// weights.
pub fn normalized_left_weight(wl: &Tensor, wr: &Tensor, c: f32) -> Result<Tensor> {
    let a = wl.mul_scalar(1.0 - c);
    let b = wr.mul_scalar(c);
    let den = a.add(&b)?;
    let fallback: Vec<f32> = den.data().iter().map(|&d| if d == 0.0 { 1.0 } else { 0.0 }).collect();
    let fallback = Tensor::from_vec(den.shape(), fallback)?;
    a.add(&fallback.mul_scalar(1.0 - c))?.div(&den.add(&fallback)?).map_err(Into::into)
}

/// Differentiable blend `I_r + w_n·(I_l - I_r)`.
pub fn blend_weighted(il: &Tensor, ir: &Tensor, wl: &Tensor, wr: &Tensor, c: f32) -> Result<Tensor> {
    let ch = check(il, ir, wl, wr, c)?;
    let wn = normalized_left_weight(wl, wr, c)?.repeat_channels(ch)?;
    Ok(ir.add(&wn.mul(&il.sub(ir)?)?)?)
}

/// Render-time blend. Returns `I_l` exactly when `c = 0`, `I_r` exactly when
/// `c = 1`, and the common value exactly when both inputs agree.
pub fn blend_exact(il: &Tensor, ir: &Tensor, wl: &Tensor, wr: &Tensor, c: f32) -> Result<Tensor> {
    let ch = check(il, ir, wl, wr, c)?;
    let (n, _, h, w) = il.dims4("blend")?;
    let hw = h * w;
    let (l, r) = (il.data(), ir.data());
    let mut out = vec![0.0f32; l.len()];
    for b in 0..n {
        for i in 0..hw {
            let a = (1.0 - c) * wl.data()[b * hw + i];
            let bb = c * wr.data()[b * hw + i];
            let wn = if a + bb == 0.0 { 1.0 - c } else { a / (a + bb) };
            for k in 0..ch {
                let j = (b * ch + k) * hw + i;
                out[j] = if wn >= 0.5 { l[j] + (1.0 - wn) * (r[j] - l[j]) } else { r[j] + wn * (l[j] - r[j]) };
            }
        }
    }
    Ok(Tensor::from_vec(il.shape(), out)?)
}
