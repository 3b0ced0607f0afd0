use rand::Rng;

use super::init::fan_in_uniform;
use super::linalg::{mm_nn, mm_nt, mm_tn};
use super::param::{Module, Param};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fully connected layer, `y = x W^T + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    x: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Dense {
            weight: Param::new(fan_in_uniform(&[output_dim, input_dim], input_dim, rng)),
            bias: Param::zeros(&[output_dim]),
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Dense {
            weight: Param::zeros(&[output_dim, input_dim]),
            bias: Param::zeros(&[output_dim]),
        }
    }

    pub fn from_tensors(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.dim(0)] {
            return Err(Error::dim(
                "dense",
                format!("weight {:?} vs bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DenseCache<T>)> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        if x.shape().len() != 2 || x.dim(1) != inp {
            return Err(Error::dim(
                "dense_forward",
                format!("x {:?} vs W [{out}, {inp}]", x.shape()),
            ));
        }
        let batch = x.dim(0);
        let mut y = Tensor::zeros(&[batch, out]);
        for row in y.data_mut().chunks_mut(out) {
            row.copy_from_slice(self.bias.value.data());
        }
        mm_nt(batch, inp, out, x.data(), self.weight.value.data(), y.data_mut(), true);
        Ok((y, DenseCache { x: x.clone() }))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, cache: &DenseCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        let batch = cache.x.dim(0);
        assert_eq!(dy.shape(), [batch, out], "dense backward grad shape");
        mm_tn(out, batch, inp, dy.data(), cache.x.data(), self.weight.grad.data_mut(), true);
        let db = self.bias.grad.data_mut();
        for row in dy.data().chunks(out) {
            for (g, &v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = Tensor::zeros(&[batch, inp]);
        mm_nn(batch, out, inp, dy.data(), self.weight.value.data(), dx.data_mut(), false);
        dx
    }
}

impl<T: Real> Module<T> for Dense<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}
