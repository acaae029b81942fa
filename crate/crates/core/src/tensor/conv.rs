//! 2-D cross-correlation through im2col and a packed single-precision GEMM.

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// `c = a * b + beta * c` for row-major `a: m×k` (strides given), `b: k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the asserts above bound every index the kernel touches given
    // the (row, column) strides; `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], g: &Geometry, cols: &mut [f32]) {
    let p = g.cols();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, dx: &mut [f32]) {
    let p = g.cols();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// Zero-padded cross-correlation.
    ///
    /// `input: (N, Cin, H, W)`, `weight: (Cout, Cin, kh, kw)`, `bias: (Cout)`.
    /// Output spatial size is `floor((H + 2p - kh) / stride) + 1`.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let (n, cin, h, w) = self.dims4("conv2d")?;
        let (cout, wcin, kh, kw) = weight.dims4("conv2d")?;
        if wcin != cin {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if bias.numel() != cout {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                msg: format!("kernel {kh}x{kw} larger than padded input {h}x{w}"),
            });
        }
        let g = Geometry {
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad: padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };
        let (k, p) = (g.rows(), g.cols());
        let in_per = cin * h * w;
        let mut out = vec![0.0f32; n * cout * p];
        let mut all_cols: Vec<Vec<f32>> = Vec::with_capacity(n);
        for b in 0..n {
            let x = &self.data()[b * in_per..(b + 1) * in_per];
            let o = &mut out[b * cout * p..(b + 1) * cout * p];
            for (co, chunk) in o.chunks_mut(p).enumerate() {
                chunk.fill(bias.data()[co]);
            }
            if g.is_pointwise() {
                gemm(cout, k, p, weight.data(), (k, 1), x, (p, 1), 1.0, o);
            } else {
                let mut cols = vec![0.0f32; k * p];
                im2col(x, &g, &mut cols);
                gemm(cout, k, p, weight.data(), (k, 1), &cols, (p, 1), 1.0, o);
                all_cols.push(cols);
            }
        }
        let (xt, wt) = (self.clone(), weight.clone());
        Ok(Tensor::from_op(
            vec![n, cout, g.ho, g.wo],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |grad, needs| {
                let mut gx = needs[0].then(|| vec![0.0f32; n * in_per]);
                let mut gw = needs[1].then(|| vec![0.0f32; cout * k]);
                let mut gb = needs[2].then(|| vec![0.0f32; cout]);
                let mut dcols = vec![0.0f32; if g.is_pointwise() { 0 } else { k * p }];
                for b in 0..n {
                    let go = &grad[b * cout * p..(b + 1) * cout * p];
                    let cols: &[f32] = if g.is_pointwise() {
                        &xt.data()[b * in_per..(b + 1) * in_per]
                    } else {
                        &all_cols[b]
                    };
                    if let Some(gw) = gw.as_mut() {
                        // dW += dOut · colsᵀ
                        gemm(cout, p, k, go, (p, 1), cols, (1, p), 1.0, gw);
                    }
                    if let Some(gb) = gb.as_mut() {
                        for (co, chunk) in go.chunks(p).enumerate() {
                            gb[co] += super::ops::pairwise_sum(chunk);
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx[b * in_per..(b + 1) * in_per];
                        // dcols = Wᵀ · dOut
                        if g.is_pointwise() {
                            gemm(k, cout, p, wt.data(), (1, k), go, (p, 1), 0.0, dst);
                        } else {
                            gemm(k, cout, p, wt.data(), (1, k), go, (p, 1), 0.0, &mut dcols);
                            col2im(&dcols, &g, dst);
                        }
                    }
                }
                vec![gx, gw, gb]
            }),
        ))
    }
}
