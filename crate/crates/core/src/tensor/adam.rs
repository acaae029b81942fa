use super::{Result, TensorError};

/// Moment buffers and hyper-parameters for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    pub step_count: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub learning_rate: f32,
}

impl AdamState {
    /// Zeroed moments shaped like `sizes`, with the usual defaults.
    pub fn new(sizes: impl IntoIterator<Item = usize>, learning_rate: f32) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One Adam update. A missing gradient counts as zero.
pub fn adam_step(params: &mut [Vec<f32>], grads: &[Option<Vec<f32>>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(TensorError::InvalidArgument {
            op: "adam_step",
            msg: format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        });
    }
    for (i, p) in params.iter().enumerate() {
        let g_len = grads[i].as_ref().map_or(p.len(), Vec::len);
        if g_len != p.len() || state.first_moment[i].len() != p.len() || state.second_moment[i].len() != p.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![p.len()],
                rhs: vec![g_len, state.first_moment[i].len()],
            });
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - (b1 as f64).powi(t);
    let bc2 = 1.0 - (b2 as f64).powi(t);
    let step = (state.learning_rate as f64 / bc1) as f32;
    let inv_bc2 = (1.0 / bc2) as f32;
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.first_moment[i], &mut state.second_moment[i]);
        match &grads[i] {
            Some(g) => {
                for j in 0..p.len() {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    p[j] -= step * m[j] / ((v[j] * inv_bc2).sqrt() + state.epsilon);
                }
            }
            None => {
                for j in 0..p.len() {
                    m[j] *= b1;
                    v[j] *= b2;
                    p[j] -= step * m[j] / ((v[j] * inv_bc2).sqrt() + state.epsilon);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![vec![1.0, -2.0, 3.5]];
        let mut st = AdamState::new([3], 1e-4);
        adam_step(&mut params, &[Some(vec![0.0; 3])], &mut st).unwrap();
        assert_eq!(params[0], vec![1.0, -2.0, 3.5]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        // m = 0.1, v = 0.001; bias correction gives m̂ = v̂ = 1.
        let mut params = vec![vec![0.0]];
        let mut st = AdamState::new([1], 1e-4);
        adam_step(&mut params, &[Some(vec![1.0])], &mut st).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((params[0][0] as f64 - expected).abs() < 1e-9, "{}", params[0][0]);
    }

    #[test]
    fn step_count_increments_by_one() {
        let mut params = vec![vec![0.0; 2]];
        let mut st = AdamState::new([2], 1e-3);
        for k in 1..=5 {
            adam_step(&mut params, &[Some(vec![0.3, -0.1])], &mut st).unwrap();
            assert_eq!(st.step_count, k);
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut params = vec![vec![0.5f32; 4], vec![-0.25; 3]];
            let mut st = AdamState::new([4, 3], 1e-4);
            for i in 0..100 {
                let g0 = (0..4).map(|j| ((i * 7 + j) as f32 * 0.37).sin()).collect();
                let g1 = (0..3).map(|j| ((i * 3 + j) as f32 * 0.11).cos()).collect();
                adam_step(&mut params, &[Some(g0), Some(g1)], &mut st).unwrap();
            }
            params
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut params = vec![vec![0.0; 2]];
        let mut st = AdamState::new([2], 1e-3);
        assert!(adam_step(&mut params, &[Some(vec![0.0; 3])], &mut st).is_err());
        let mut st = AdamState::new([3], 1e-3);
        assert!(adam_step(&mut params, &[None], &mut st).is_err());
    }
}
