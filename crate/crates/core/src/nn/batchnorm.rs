use super::param::{Module, Param};
use super::tensor::Tensor;
use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-channel batch normalization over `[batch, channels, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// False until the first training batch has populated the running statistics.
    pub initialized: bool,
    pub momentum: T,
    pub eps: T,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    mode: Mode,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::zeros(&[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            initialized: false,
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Train mode normalizes with batch statistics and updates the running averages;
    /// eval mode uses the running averages.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.channels() {
            return Err(Error::dim(
                "batchnorm2d_forward",
                format!("x {:?} vs {} channels", s, self.channels()),
            ));
        }
        let (batch, ch, hw) = (s[0], s[1], s[2] * s[3]);
        let n = batch * hw;
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::InvalidArgument(
                        "batch-norm training needs at least two values per channel".into(),
                    ));
                }
                let nf = T::of_usize(n);
                let mut mean = vec![T::zero(); ch];
                let mut var = vec![T::zero(); ch];
                for c in 0..ch {
                    let mut sum = T::zero();
                    for b in 0..batch {
                        let o = (b * ch + c) * hw;
                        sum += x.data()[o..o + hw].iter().copied().sum::<T>();
                    }
                    let mu = sum / nf;
                    let mut sq = T::zero();
                    for b in 0..batch {
                        let o = (b * ch + c) * hw;
                        for &v in &x.data()[o..o + hw] {
                            sq += (v - mu) * (v - mu);
                        }
                    }
                    mean[c] = mu;
                    var[c] = sq / nf;
                }
                let m = self.momentum;
                let unbias = nf / T::of_usize(n - 1);
                for c in 0..ch {
                    if self.initialized {
                        self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean[c];
                        self.running_var[c] = (T::one() - m) * self.running_var[c] + m * var[c] * unbias;
                    } else {
                        self.running_mean[c] = (T::one() - m) * T::zero() + m * mean[c];
                        self.running_var[c] = (T::one() - m) * T::one() + m * var[c] * unbias;
                    }
                }
                self.initialized = true;
                (mean, var)
            }
            Mode::Eval => {
                if !self.initialized {
                    return Err(Error::BatchNormUninitialized);
                }
                (self.running_mean.clone(), self.running_var.clone())
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut y = Tensor::zeros(s);
        let mut x_hat = vec![T::zero(); x.len()];
        let (g, bt) = (self.gamma.value.data(), self.beta.value.data());
        for b in 0..batch {
            for c in 0..ch {
                let o = (b * ch + c) * hw;
                for k in o..o + hw {
                    let xh = (x.data()[k] - mean[c]) * inv_std[c];
                    x_hat[k] = xh;
                    y.data_mut()[k] = g[c] * xh + bt[c];
                }
            }
        }
        Ok((
            y,
            BatchNormCache {
                mode,
                x_hat,
                inv_std,
                shape: s.to_vec(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let s = &cache.shape;
        assert_eq!(dy.shape(), s.as_slice(), "batchnorm backward grad shape");
        let (batch, ch, hw) = (s[0], s[1], s[2] * s[3]);
        let nf = T::of_usize(batch * hw);
        let mut dx = Tensor::zeros(s);
        for c in 0..ch {
            let mut sum_dy = T::zero();
            let mut sum_dy_xh = T::zero();
            for b in 0..batch {
                let o = (b * ch + c) * hw;
                for k in o..o + hw {
                    sum_dy += dy.data()[k];
                    sum_dy_xh += dy.data()[k] * cache.x_hat[k];
                }
            }
            self.gamma.grad.data_mut()[c] += sum_dy_xh;
            self.beta.grad.data_mut()[c] += sum_dy;
            let scale = self.gamma.value.data()[c] * cache.inv_std[c];
            for b in 0..batch {
                let o = (b * ch + c) * hw;
                for k in o..o + hw {
                    dx.data_mut()[k] = match cache.mode {
                        Mode::Train => scale / nf * (nf * dy.data()[k] - sum_dy - cache.x_hat[k] * sum_dy_xh),
                        Mode::Eval => scale * dy.data()[k],
                    };
                }
            }
        }
        dx
    }
}

impl<T: Real> Module<T> for BatchNorm2d<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_moments(y: &Tensor<f64>, c: usize) -> (f64, f64) {
        let s = y.shape();
        let hw = s[2] * s[3];
        let vals: Vec<f64> = (0..s[0])
            .flat_map(|b| y.data()[(b * s[1] + c) * hw..(b * s[1] + c + 1) * hw].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    fn sample_input() -> Tensor<f64> {
        let data = (0..2 * 3 * 4 * 4).map(|k| ((k * 37 % 23) as f64 * 0.7).sin() * 3.0 + k as f64 * 0.01).collect();
        Tensor::from_vec(&[2, 3, 4, 4], data).unwrap()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut bn = BatchNorm2d::new(3);
        let (y, _) = bn.forward(&sample_input(), Mode::Train).unwrap();
        for c in 0..3 {
            let (m, v) = channel_moments(&y, c);
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn affine_parameters_applied_after_normalization() {
        let x = sample_input();
        let mut plain = BatchNorm2d::new(3);
        let (y0, _) = plain.forward(&x, Mode::Train).unwrap();
        let mut bn = BatchNorm2d::new(3);
        bn.gamma.value.fill(2.0);
        bn.beta.value.fill(3.0);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(y0.data()) {
            assert!((a - (2.0 * b + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.beta.value.fill(0.4);
        let (y, _) = bn.forward(&Tensor::full(&[2, 1, 3, 3], 5.0), Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.4).abs() < 1e-9));
    }

    #[test]
    fn eval_before_training_is_an_error() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        assert!(matches!(
            bn.forward(&Tensor::zeros(&[1, 2, 2, 2]), Mode::Eval),
            Err(Error::BatchNormUninitialized)
        ));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        // batch mean 2, unbiased variance 2
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        let want = (1.0 - 0.2) / (1.1f64 + 1e-5).sqrt();
        assert!((y.data()[0] - want).abs() < 1e-12);
    }
}
