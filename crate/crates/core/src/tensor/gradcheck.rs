//! Reverse-mode gradients checked against central finite differences.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Result, Tensor};

/// Finite-difference step, sized for 32-bit evaluation.
pub const STEP: f32 = 1e-3;

/// Relative errors divide by the largest analytic or numeric gradient
/// magnitude of the input, and never by less than this.
const ERROR_FLOOR: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct InputReport {
    pub input: usize,
    pub max_rel_error: f64,
    /// Flat index, analytic and numeric gradient of the worst element.
    pub worst: Option<(usize, f64, f64)>,
    /// Elements whose one-sided differences disagree (non-differentiable
    /// points); they are excluded from the error statistic.
    pub kinks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub inputs: Vec<InputReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    pub fn kink_count(&self) -> usize {
        self.inputs.iter().map(|r| r.kinks.len()).sum()
    }
}

/// Compares reverse-mode gradients of `f` to central differences.
///
/// Non-scalar outputs are contracted with a fixed pseudo-random weight
/// vector so every output element contributes. Differences of the
/// outputs are accumulated in `f64` to keep 32-bit rounding out of the
/// quotient.
pub fn gradcheck<F>(f: F, inputs: &[(Vec<usize>, Vec<f32>)], tolerance: f64) -> Result<GradcheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let eval = |values: &[Vec<f32>], grad: bool| -> Result<(Vec<Tensor>, Tensor)> {
        let leaves = inputs
            .iter()
            .zip(values)
            .map(|((shape, _), v)| {
                if grad {
                    Tensor::parameter(shape, v.clone())
                } else {
                    Tensor::from_vec(shape, v.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let out = f(&leaves)?;
        Ok((leaves, out))
    };
    let base: Vec<Vec<f32>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let (leaves, out) = eval(&base, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights: Vec<f32> = if out.numel() == 1 {
        vec![1.0]
    } else {
        (0..out.numel()).map(|_| rng.random_range(0.5f32..1.5)).collect()
    };
    let projected = if out.numel() == 1 {
        out.reshape(&[1])?
    } else {
        out.mul(&Tensor::from_vec(out.shape(), weights.clone())?)?.sum()
    };
    projected.backward()?;
    let base_out: Vec<f32> = out.to_vec();
    let contract = |o: &Tensor| -> Vec<f64> {
        o.data()
            .iter()
            .zip(&base_out)
            .zip(&weights)
            .map(|((&a, &b), &w)| (a as f64 - b as f64) * w as f64)
            .collect()
    };

    let mut reports = Vec::with_capacity(inputs.len());
    for (idx, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let mut report = InputReport { input: idx, max_rel_error: 0.0, worst: None, kinks: Vec::new() };
        let mut numeric = vec![None; leaf.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut values = base.clone();
            let x0 = values[idx][j];
            values[idx][j] = x0 + STEP;
            let plus: f64 = contract(&eval(&values, false)?.1).iter().sum();
            values[idx][j] = x0 - STEP;
            let minus: f64 = contract(&eval(&values, false)?.1).iter().sum();
            // step actually represented in f32 around x0
            let h_plus = ((x0 + STEP) as f64) - x0 as f64;
            let h_minus = x0 as f64 - ((x0 - STEP) as f64);
            let fwd = plus / h_plus;
            let bwd = -minus / h_minus;
            let scale = fwd.abs().max(bwd.abs()).max(1.0);
            if (fwd - bwd).abs() > 0.05 * scale {
                report.kinks.push(j);
                continue;
            }
            *slot = Some((plus - minus) / (h_plus + h_minus));
        }
        // errors are relative to the largest gradient of this input: f32
        // outputs carry rounding noise proportional to their magnitude, not
        // to each element's own derivative
        let scale = numeric
            .iter()
            .zip(&analytic)
            .filter_map(|(n, &a)| n.map(|n| n.abs().max((a as f64).abs())))
            .fold(ERROR_FLOOR, f64::max);
        for (j, n) in numeric.iter().enumerate() {
            let Some(n) = *n else { continue };
            let a = analytic[j] as f64;
            let err = (a - n).abs() / scale;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((j, a, n));
            }
        }
        reports.push(report);
    }
    Ok(GradcheckReport {
        max_rel_error: reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max),
        tolerance,
        inputs: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_matches_closely() {
        let r = gradcheck(
            |x| Ok(x[0].mul_scalar(3.0).add_scalar(1.0).sum()),
            &[(vec![4], vec![0.1, -0.7, 2.0, 5.0])],
            1e-3,
        )
        .unwrap();
        // f32 rounding of the scalar output over a 1e-3 step bounds the agreement
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.passed());
    }

    #[test]
    fn tied_channel_max_is_flagged_not_counted() {
        let r = gradcheck(
            |x| Ok(x[0].channel_max()?.0),
            &[(vec![1, 2, 1, 2], vec![5.0, 1.0, 5.0, 3.0])],
            1e-3,
        )
        .unwrap();
        // pixel 0 is tied across both channels
        assert_eq!(r.inputs[0].kinks, vec![0, 2]);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // abs() with inputs at +/-1 is fine; the check should fail if we
        // compare against a function whose backward is deliberately off.
        let r = gradcheck(
            |x| {
                let y = x[0].detach().mul_scalar(2.0);
                x[0].add(&y)
            },
            &[(vec![3], vec![0.3, 0.6, -0.2])],
            1e-3,
        )
        .unwrap();
        assert!(!r.passed());
    }
}
