use rand::Rng;

use super::param::{Module, Param};
use super::tensor::Tensor;
use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parametric ReLU with a single trainable slope for the whole layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PRelu<T> {
    pub alpha: Param<T>,
}

#[derive(Clone, Debug)]
pub struct PReluCache<T> {
    x: Tensor<T>,
}

impl<T: Real> PRelu<T> {
    pub fn new() -> Self {
        Self::with_alpha(T::lit(0.25))
    }

    pub fn with_alpha(alpha: T) -> Self {
        PRelu {
            alpha: Param::new(Tensor::full(&[1], alpha)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, PReluCache<T>) {
        let a = self.alpha.value.data()[0];
        let y = x.map(|v| if v > T::zero() { v } else { a * v });
        (y, PReluCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &PReluCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let a = self.alpha.value.data()[0];
        let mut da = T::zero();
        let mut dx = Tensor::zeros(dy.shape());
        for ((d, &g), &v) in dx.data_mut().iter_mut().zip(dy.data()).zip(cache.x.data()) {
            if v > T::zero() {
                *d = g;
            } else {
                *d = a * g;
                da += g * v;
            }
        }
        self.alpha.grad.data_mut()[0] += da;
        dx
    }
}

impl<T: Real> Default for PRelu<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Module<T> for PRelu<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("alpha".into(), &self.alpha)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("alpha".into(), &mut self.alpha)]
    }
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` in training, identity in eval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Per-element multiplier applied in the forward pass (`None` when the layer was a no-op).
#[derive(Clone, Debug)]
pub struct DropoutMask<T> {
    scale: Option<Vec<T>>,
}

impl<T> DropoutMask<T> {
    pub fn identity() -> Self {
        DropoutMask { scale: None }
    }
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(&self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> (Tensor<T>, DropoutMask<T>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), DropoutMask::identity());
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let scale: Vec<T> = (0..x.len())
            .map(|_| if rng.random::<f64>() < self.rate { T::zero() } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, &s) in y.data_mut().iter_mut().zip(&scale) {
            *v *= s;
        }
        (y, DropoutMask { scale: Some(scale) })
    }

    pub fn backward<T: Real>(&self, mask: &DropoutMask<T>, dy: &Tensor<T>) -> Tensor<T> {
        match &mask.scale {
            None => dy.clone(),
            Some(scale) => {
                let mut dx = dy.clone();
                for (v, &s) in dx.data_mut().iter_mut().zip(scale) {
                    *v *= s;
                }
                dx
            }
        }
    }
}

/// Mean over the spatial axes, `[batch, c, h, w] -> [batch, c]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (batch, ch, hw) = (s[0], s[1], s[2] * s[3]);
    let inv = T::one() / T::of_usize(hw);
    let data = x.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Tensor::from_vec(&[batch, ch], data).expect("pool shape")
}

pub fn global_avg_pool_backward<T: Real>(dy: &Tensor<T>, input_shape: &[usize]) -> Tensor<T> {
    let hw = input_shape[2] * input_shape[3];
    let inv = T::one() / T::of_usize(hw);
    let mut dx = Tensor::zeros(input_shape);
    for (plane, &g) in dx.data_mut().chunks_mut(hw).zip(dy.data()) {
        plane.fill(g * inv);
    }
    dx
}
