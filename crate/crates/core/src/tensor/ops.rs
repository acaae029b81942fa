use super::{check_same_shape, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise maximum; ties send the gradient to the left operand.
    Max2,
}

/// Right-hand side of an elementwise op.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f32),
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const LEAKY_SLOPE: f32 = 0.2;

    pub fn leaky() -> Self {
        Activation::LeakyRelu(Self::LEAKY_SLOPE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    MeanAbs,
}

impl Tensor {
    pub fn elementwise(&self, op: BinaryOp, rhs: Operand<'_>) -> Result<Tensor> {
        match rhs {
            Operand::Tensor(b) => {
                check_same_shape(op_name(op), self, b)?;
                Ok(binary_tensor(op, self, b))
            }
            Operand::Scalar(s) => Ok(binary_scalar(op, self, s)),
        }
    }

    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Add, Operand::Tensor(b))
    }

    pub fn sub(&self, b: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Sub, Operand::Tensor(b))
    }

    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Mul, Operand::Tensor(b))
    }

    pub fn div(&self, b: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Div, Operand::Tensor(b))
    }

    pub fn max2(&self, b: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryOp::Max2, Operand::Tensor(b))
    }

    pub fn add_scalar(&self, s: f32) -> Tensor {
        binary_scalar(BinaryOp::Add, self, s)
    }

    pub fn mul_scalar(&self, s: f32) -> Tensor {
        binary_scalar(BinaryOp::Mul, self, s)
    }

    pub fn abs(&self) -> Tensor {
        let x = self.clone();
        let data = self.data().iter().map(|v| v.abs()).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, _| {
                let gx = g
                    .iter()
                    .zip(x.data())
                    .map(|(g, &v)| g * sign(v))
                    .collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn activation(&self, kind: Activation) -> Tensor {
        let out: Vec<f32> = match kind {
            Activation::LeakyRelu(slope) => self
                .data()
                .iter()
                .map(|&v| if v >= 0.0 { v } else { slope * v })
                .collect(),
            Activation::Sigmoid => self.data().iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => self.data().iter().map(|v| v.tanh()).collect(),
        };
        let x = self.clone();
        let y = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let gx: Vec<f32> = match kind {
                    Activation::LeakyRelu(slope) => g
                        .iter()
                        .zip(x.data())
                        .map(|(g, &v)| if v >= 0.0 { *g } else { slope * g })
                        .collect(),
                    Activation::Sigmoid => {
                        g.iter().zip(&y).map(|(g, &s)| g * s * (1.0 - s)).collect()
                    }
                    Activation::Tanh => g.iter().zip(&y).map(|(g, &t)| g * (1.0 - t * t)).collect(),
                };
                vec![Some(gx)]
            }),
        )
    }

    pub fn leaky_relu(&self) -> Tensor {
        self.activation(Activation::leaky())
    }

    pub fn sigmoid(&self) -> Tensor {
        self.activation(Activation::Sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.activation(Activation::Tanh)
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let total = pairwise_sum(self.data());
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Mean (or mean absolute value) of the tensor, optionally restricted to
    /// a binary mask of the same shape. The masked denominator is floored
    /// at 1 so an empty mask yields 0.
    pub fn reduce(&self, kind: Reduction, mask: Option<&Tensor>) -> Result<Tensor> {
        if let Some(m) = mask {
            check_same_shape("reduce", self, m)?;
        }
        let mask_data: Option<Vec<f32>> = mask.map(|m| m.to_vec());
        let denom = match &mask_data {
            Some(m) => pairwise_sum(m).max(1.0),
            None => self.numel().max(1) as f32,
        };
        let terms: Vec<f32> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let v = if kind == Reduction::MeanAbs { v.abs() } else { v };
                match &mask_data {
                    Some(m) => v * m[i],
                    None => v,
                }
            })
            .collect();
        let value = pairwise_sum(&terms) / denom;
        let x = self.clone();
        Ok(Tensor::from_op(
            vec![1],
            vec![value],
            vec![self.clone()],
            Box::new(move |g, _| {
                let scale = g[0] / denom;
                let gx = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let d = if kind == Reduction::MeanAbs { sign(v) } else { 1.0 };
                        let m = mask_data.as_ref().map_or(1.0, |m| m[i]);
                        scale * d * m
                    })
                    .collect();
                vec![Some(gx)]
            }),
        ))
    }

    pub fn mean_abs(&self, mask: Option<&Tensor>) -> Result<Tensor> {
        self.reduce(Reduction::MeanAbs, mask)
    }

    pub fn mean(&self) -> Tensor {
        self.reduce(Reduction::Mean, None).expect("unmasked reduce")
    }

    /// Per-pixel maximum over channels of an `(N, C, H, W)` tensor.
    ///
    /// Returns `(values, argmax)`, both `(N, 1, H, W)`; ties resolve to the
    /// lowest channel index and the backward pass routes the whole upstream
    /// gradient to the selected channel.
    pub fn channel_max(&self) -> Result<(Tensor, Tensor)> {
        let (n, c, h, w) = self.dims4("channel_max")?;
        if c == 0 {
            return Err(TensorError::BadShape {
                op: "channel_max",
                expected: "at least one channel",
                got: self.shape().to_vec(),
            });
        }
        let hw = h * w;
        let x = self.data();
        let mut values = vec![0.0f32; n * hw];
        let mut arg = vec![0usize; n * hw];
        for b in 0..n {
            for p in 0..hw {
                let mut best = x[b * c * hw + p];
                let mut best_k = 0;
                for k in 1..c {
                    let v = x[(b * c + k) * hw + p];
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                }
                values[b * hw + p] = best;
                arg[b * hw + p] = best_k;
            }
        }
        let argmax = Tensor::from_vec(&[n, 1, h, w], arg.iter().map(|&k| k as f32).collect())?;
        let total = n * c * hw;
        let out = Tensor::from_op(
            vec![n, 1, h, w],
            values,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0f32; total];
                for b in 0..n {
                    for p in 0..hw {
                        gx[(b * c + arg[b * hw + p]) * hw + p] = g[b * hw + p];
                    }
                }
                vec![Some(gx)]
            }),
        );
        Ok((out, argmax))
    }

    /// Per-pixel sum over channels, `(N, C, H, W) -> (N, 1, H, W)`.
    pub fn channel_sum(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("channel_sum")?;
        let hw = h * w;
        let x = self.data();
        let mut out = vec![0.0f32; n * hw];
        for b in 0..n {
            for k in 0..c {
                let src = &x[(b * c + k) * hw..(b * c + k + 1) * hw];
                out[b * hw..(b + 1) * hw]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(o, v)| *o += v);
            }
        }
        Ok(Tensor::from_op(
            vec![n, 1, h, w],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0f32; n * c * hw];
                for b in 0..n {
                    for k in 0..c {
                        gx[(b * c + k) * hw..(b * c + k + 1) * hw]
                            .copy_from_slice(&g[b * hw..(b + 1) * hw]);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Concatenates `(N, C_i, H, W)` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat_channels",
            msg: "no inputs".into(),
        })?;
        let (n, _, h, w) = first.dims4("concat_channels")?;
        let mut chans = Vec::with_capacity(parts.len());
        for p in parts {
            let (pn, pc, ph, pw) = p.dims4("concat_channels")?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            chans.push(pc);
        }
        let c_total: usize = chans.iter().sum();
        let hw = h * w;
        let mut out = Vec::with_capacity(n * c_total * hw);
        for b in 0..n {
            for (p, &pc) in parts.iter().zip(&chans) {
                out.extend_from_slice(&p.data()[b * pc * hw..(b + 1) * pc * hw]);
            }
        }
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(Tensor::from_op(
            vec![n, c_total, h, w],
            out,
            parents,
            Box::new(move |g, needs| {
                let mut grads: Vec<Option<Vec<f32>>> = chans
                    .iter()
                    .zip(needs)
                    .map(|(&pc, &need)| need.then(|| Vec::with_capacity(n * pc * hw)))
                    .collect();
                for b in 0..n {
                    let mut offset = b * c_total * hw;
                    for (slot, &pc) in grads.iter_mut().zip(&chans) {
                        if let Some(buf) = slot {
                            buf.extend_from_slice(&g[offset..offset + pc * hw]);
                        }
                        offset += pc * hw;
                    }
                }
                grads
            }),
        ))
    }

    /// Channels `start..start + len` of an `(N, C, H, W)` tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("slice_channels")?;
        if start + len > c || len == 0 {
            return Err(TensorError::InvalidArgument {
                op: "slice_channels",
                msg: format!("range {start}..{} outside {c} channels", start + len),
            });
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * len * hw);
        for b in 0..n {
            out.extend_from_slice(&self.data()[(b * c + start) * hw..(b * c + start + len) * hw]);
        }
        Ok(Tensor::from_op(
            vec![n, len, h, w],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0f32; n * c * hw];
                for b in 0..n {
                    gx[(b * c + start) * hw..(b * c + start + len) * hw]
                        .copy_from_slice(&g[b * len * hw..(b + 1) * len * hw]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Tiles a single-channel `(N, 1, H, W)` tensor to `(N, times, H, W)`.
    pub fn repeat_channels(&self, times: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("repeat_channels")?;
        if c != 1 {
            return Err(TensorError::BadShape {
                op: "repeat_channels",
                expected: "a single-channel tensor",
                got: self.shape().to_vec(),
            });
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * times * hw);
        for b in 0..n {
            for _ in 0..times {
                out.extend_from_slice(&self.data()[b * hw..(b + 1) * hw]);
            }
        }
        Ok(Tensor::from_op(
            vec![n, times, h, w],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0f32; n * hw];
                for b in 0..n {
                    for k in 0..times {
                        let src = &g[(b * times + k) * hw..(b * times + k + 1) * hw];
                        gx[b * hw..(b + 1) * hw]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, v)| *a += v);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// `x * scale + bias` with `scale` and `bias` broadcast per channel from
    /// `(N, C, 1, 1)` over an `(N, C, H, W)` input.
    pub fn channel_affine(&self, scale: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("channel_affine")?;
        for t in [scale, bias] {
            if t.shape() != [n, c, 1, 1] {
                return Err(TensorError::ShapeMismatch {
                    op: "channel_affine",
                    lhs: self.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let hw = h * w;
        let x = self.data();
        let mut out = vec![0.0f32; x.len()];
        for bc in 0..n * c {
            let (s, b) = (scale.data()[bc], bias.data()[bc]);
            for p in 0..hw {
                out[bc * hw + p] = x[bc * hw + p] * s + b;
            }
        }
        let (xs, ss) = (self.clone(), scale.clone());
        Ok(Tensor::from_op(
            vec![n, c, h, w],
            out,
            vec![self.clone(), scale.clone(), bias.clone()],
            Box::new(move |g, needs| {
                let x = xs.data();
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0f32; g.len()];
                    for bc in 0..n * c {
                        let s = ss.data()[bc];
                        for p in 0..hw {
                            gx[bc * hw + p] = g[bc * hw + p] * s;
                        }
                    }
                    gx
                });
                let gs = needs[1].then(|| {
                    (0..n * c)
                        .map(|bc| {
                            let prod: Vec<f32> = (0..hw).map(|p| g[bc * hw + p] * x[bc * hw + p]).collect();
                            pairwise_sum(&prod)
                        })
                        .collect()
                });
                let gb = needs[2]
                    .then(|| (0..n * c).map(|bc| pairwise_sum(&g[bc * hw..(bc + 1) * hw])).collect());
                vec![gx, gs, gb]
            }),
        ))
    }
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
        BinaryOp::Div => "div",
        BinaryOp::Max2 => "max2",
    }
}

fn binary_tensor(op: BinaryOp, a: &Tensor, b: &Tensor) -> Tensor {
    let data: Vec<f32> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| apply(op, x, y))
        .collect();
    let (ac, bc) = (a.clone(), b.clone());
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, needs| {
            let (x, y) = (ac.data(), bc.data());
            let ga = needs[0].then(|| match op {
                BinaryOp::Add | BinaryOp::Sub => g.to_vec(),
                BinaryOp::Mul => g.iter().zip(y).map(|(g, y)| g * y).collect(),
                BinaryOp::Div => g.iter().zip(y).map(|(g, y)| g / y).collect(),
                BinaryOp::Max2 => g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(g, (x, y))| if x >= y { *g } else { 0.0 })
                    .collect(),
            });
            let gb = needs[1].then(|| match op {
                BinaryOp::Add => g.to_vec(),
                BinaryOp::Sub => g.iter().map(|g| -g).collect(),
                BinaryOp::Mul => g.iter().zip(x).map(|(g, x)| g * x).collect(),
                BinaryOp::Div => g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect(),
                BinaryOp::Max2 => g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(g, (x, y))| if x >= y { 0.0 } else { *g })
                    .collect(),
            });
            vec![ga, gb]
        }),
    )
}

fn binary_scalar(op: BinaryOp, a: &Tensor, s: f32) -> Tensor {
    let data: Vec<f32> = a.data().iter().map(|&x| apply(op, x, s)).collect();
    let ac = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Box::new(move |g, _| {
            let ga = match op {
                BinaryOp::Add | BinaryOp::Sub => g.to_vec(),
                BinaryOp::Mul => g.iter().map(|g| g * s).collect(),
                BinaryOp::Div => g.iter().map(|g| g / s).collect(),
                BinaryOp::Max2 => g
                    .iter()
                    .zip(ac.data())
                    .map(|(g, &x)| if x >= s { *g } else { 0.0 })
                    .collect(),
            };
            vec![Some(ga)]
        }),
    )
}

fn apply(op: BinaryOp, x: f32, y: f32) -> f32 {
    match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => x / y,
        BinaryOp::Max2 => {
            if x >= y {
                x
            } else {
                y
            }
        }
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Fixed-order pairwise summation; deterministic and tighter than a
/// running sum for long buffers.
pub(crate) fn pairwise_sum(values: &[f32]) -> f32 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
