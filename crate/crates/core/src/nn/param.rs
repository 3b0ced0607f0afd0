use super::tensor::Tensor;
use crate::scalar::Real;

/// Trainable tensor with its gradient accumulator and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Param {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Clear optimizer state, keeping the value.
    pub fn reset_optimizer(&mut self) {
        self.adam_m.fill(T::zero());
        self.adam_v.fill(T::zero());
        self.step_count = 0;
    }
}

/// Anything owning named trainable parameters.
pub trait Module<T: Real> {
    fn params(&self) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    fn reset_optimizer(&mut self) {
        for (_, p) in self.params_mut() {
            p.reset_optimizer();
        }
    }
}

/// Prefix every parameter name of a sub-module.
pub fn scoped<'a, T: Real>(
    prefix: &str,
    items: Vec<(String, &'a Param<T>)>,
) -> impl Iterator<Item = (String, &'a Param<T>)> + 'a {
    let prefix = prefix.to_string();
    items
        .into_iter()
        .map(move |(n, p)| (format!("{prefix}.{n}"), p))
}

pub fn scoped_mut<'a, T: Real>(
    prefix: &str,
    items: Vec<(String, &'a mut Param<T>)>,
) -> impl Iterator<Item = (String, &'a mut Param<T>)> + 'a {
    let prefix = prefix.to_string();
    items
        .into_iter()
        .map(move |(n, p)| (format!("{prefix}.{n}"), p))
}
