//! Image quality metrics.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
}

fn dims(a: &Tensor, b: &Tensor, border: usize) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = a.dims4("metrics")?;
    if a.shape() != b.shape() || n != 1 {
        return Err(Error::Config(format!("metric inputs differ or are batched: {:?} vs {:?}", a.shape(), b.shape())));
    }
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::Config(format!("border crop {border} leaves nothing of {h}x{w}")));
    }
    Ok((c, h, w))
}

/// `10·log10(1 / MSE)` over all channels, skipping `border` pixels on every
/// side and, when given, pixels where `mask` (`(1, 1, H, W)`) is 0.
pub fn psnr(a: &Tensor, b: &Tensor, border: usize, mask: Option<&Tensor>) -> Result<f64> {
    let (c, h, w) = dims(a, b, border)?;
    if let Some(m) = mask {
        if m.shape() != [1, 1, h, w] {
            return Err(Error::Config(format!("mask {:?} does not match image {:?}", m.shape(), a.shape())));
        }
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for y in border..h - border {
        for x in border..w - border {
            if mask.is_some_and(|m| m.data()[y * w + x] == 0.0) {
                continue;
            }
            for ch in 0..c {
                let k = (ch * h + y) * w + x;
                let d = (a.data()[k] - b.data()[k]) as f64;
                sum += d * d;
            }
            count += c;
        }
    }
    if count == 0 {
        return Err(Error::Config("no pixels left to compare".into()));
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 { PSNR_CAP } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP) })
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

fn gaussian() -> [f64; WINDOW] {
    let mut g: [f64; WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * SIGMA * SIGMA)).exp());
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable valid-mode filtering of an `h × w` plane.
fn filter(p: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0f64; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..WINDOW).map(|k| g[k] * p[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0f64; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03, data
/// range 1), averaged over channels, after cropping `border` pixels.
pub fn ssim(a: &Tensor, b: &Tensor, border: usize) -> Result<f64> {
    let (c, h, w) = dims(a, b, border)?;
    let (hc, wc) = (h - 2 * border, w - 2 * border);
    if hc < WINDOW || wc < WINDOW {
        return Err(Error::Config(format!("SSIM needs at least {WINDOW}x{WINDOW} pixels after cropping")));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let g = gaussian();
    let crop = |t: &Tensor, ch: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(hc * wc);
        for y in border..h - border {
            for x in border..w - border {
                out.push(t.data()[(ch * h + y) * w + x] as f64);
            }
        }
        out
    };
    let mut total = 0.0;
    for ch in 0..c {
        let (x, y) = (crop(a, ch), crop(b, ch));
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let (mx, my) = (filter(&x, hc, wc, &g), filter(&y, hc, wc, &g));
        let sxx = filter(&prod(&x, &x), hc, wc, &g);
        let syy = filter(&prod(&y, &y), hc, wc, &g);
        let sxy = filter(&prod(&x, &y), hc, wc, &g);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (vx, vy, cxy) = (sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i]);
            acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / c as f64)
}

pub fn compute_metrics(a: &Tensor, b: &Tensor, border: usize) -> Result<Metrics> {
    Ok(Metrics { psnr: psnr(a, b, border, None)?, ssim: ssim(a, b, border)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(seed: u32, h: usize, w: usize) -> Tensor {
        let v = (0..3 * h * w).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) % 1000) as f32 / 1250.0).collect();
        Tensor::from_vec(&[1, 3, h, w], v).unwrap()
    }

    #[test]
    fn identical_images() {
        let a = noise(1, 24, 24);
        let m = compute_metrics(&a, &a, 0).unwrap();
        assert_eq!(m.psnr, 99.0);
        assert!((m.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_gives_twenty_db() {
        let a = Tensor::full(&[1, 3, 16, 16], 0.4);
        let b = a.add_scalar(0.1);
        assert!((psnr(&a, &b, 2, None).unwrap() - 20.0).abs() < 1e-4);
    }

    #[test]
    fn negative_image_has_negative_ssim() {
        let a = noise(7, 32, 32);
        let neg = a.mul_scalar(-1.0).add_scalar(1.0);
        assert!(ssim(&a, &neg, 4).unwrap() < 0.0);
    }

    #[test]
    fn masks_and_borders() {
        let a = Tensor::zeros(&[1, 3, 8, 8]);
        let mut v = vec![0.0f32; 3 * 64];
        v[0] = 1.0; // corner pixel, cropped away
        let b = Tensor::from_vec(&[1, 3, 8, 8], v).unwrap();
        assert_eq!(psnr(&a, &b, 1, None).unwrap(), 99.0);
        let mut m = vec![1.0f32; 64];
        m[0] = 0.0;
        let mask = Tensor::from_vec(&[1, 1, 8, 8], m).unwrap();
        assert_eq!(psnr(&a, &b, 0, Some(&mask)).unwrap(), 99.0);
        assert!(psnr(&a, &b, 4, None).is_err());
        assert!(ssim(&a, &b, 0).is_err());
        assert!(psnr(&a, &Tensor::zeros(&[1, 3, 8, 9]), 0, None).is_err());
    }

    proptest! {
        #[test]
        fn ssim_is_bounded_and_symmetric(s1 in any::<u32>(), s2 in any::<u32>()) {
            let (a, b) = (noise(s1, 16, 16), noise(s2, 16, 16));
            let x = ssim(&a, &b, 0).unwrap();
            prop_assert!((-1.0..=1.0 + 1e-9).contains(&x));
            prop_assert!((x - ssim(&b, &a, 0).unwrap()).abs() < 1e-12);
        }
    }
}
