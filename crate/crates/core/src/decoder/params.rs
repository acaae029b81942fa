use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Activation, Tensor};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered, named parameter buffers of one network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.push(Param { name: name.into(), shape: shape.to_vec(), data });
        self.params.len() - 1
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.data.len()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Fresh graph leaves holding a copy of every buffer.
    pub fn bind(&self, requires_grad: bool) -> Result<Vec<Tensor>> {
        self.params
            .iter()
            .map(|p| {
                let t = if requires_grad {
                    Tensor::parameter(&p.shape, p.data.clone())?
                } else {
                    Tensor::from_vec(&p.shape, p.data.clone())?
                };
                Ok(t)
            })
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f32>> {
        self.params.iter_mut().map(|p| &mut p.data).collect()
    }

    /// Copies of all buffers, in order.
    pub fn snapshot(&self) -> Vec<Vec<f32>> {
        self.params.iter().map(|p| p.data.clone()).collect()
    }

    pub fn restore(&mut self, buffers: Vec<Vec<f32>>) {
        debug_assert_eq!(buffers.len(), self.params.len());
        for (p, b) in self.params.iter_mut().zip(buffers) {
            debug_assert_eq!(p.data.len(), b.len());
            p.data = b;
        }
    }
}

/// Seeded initializer: centred uniform draws with fan-in scaling.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uniform(&mut self, n: usize, bound: f32) -> Vec<f32> {
        (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect()
    }

    /// Kaiming-uniform bound for a layer followed by leaky ReLU, times `gain`.
    pub fn kaiming(&mut self, n: usize, fan_in: usize, gain: f32) -> Vec<f32> {
        let slope = Activation::LEAKY_SLOPE;
        let relu_gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let bound = gain * relu_gain * (3.0 / fan_in.max(1) as f32).sqrt();
        self.uniform(n, bound)
    }
}
