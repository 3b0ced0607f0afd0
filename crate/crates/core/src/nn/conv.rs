use rand::Rng;

use super::init::fan_in_uniform;
use super::linalg::{mm_nn, mm_nt, mm_tn};
use super::param::{Module, Param};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// 2-D cross-correlation with stride 1 and "same" zero padding (odd kernels only).
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    /// `[out_channels, in_channels, kh, kw]`
    pub kernels: Param<T>,
    /// `[out_channels]`
    pub bias: Param<T>,
}

#[derive(Clone, Debug)]
pub struct Conv2dCache<T> {
    x: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            kernels: Param::new(fan_in_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng)),
            bias: Param::zeros(&[out_channels]),
        }
    }

    pub fn from_tensors(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let s = kernels.shape();
        if s.len() != 4 || bias.shape() != [s[0]] {
            return Err(Error::dim("conv2d", format!("kernels {:?} vs bias {:?}", s, bias.shape())));
        }
        if s[2] % 2 == 0 || s[3] % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "same padding needs odd kernel sizes, got {}x{}",
                s[2], s[3]
            )));
        }
        Ok(Conv2d {
            kernels: Param::new(kernels),
            bias: Param::new(bias),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    fn kernel_hw(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, cols: &mut [T]) {
        let (kh, kw) = self.kernel_hw();
        let (ph, pw) = (kh / 2, kw / 2);
        let hw = h * w;
        for ci in 0..self.in_channels() {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ((ci * kh + ki) * kw + kj) * hw;
                    for oy in 0..h {
                        let iy = oy as isize + ki as isize - ph as isize;
                        for ox in 0..w {
                            let ix = ox as isize + kj as isize - pw as isize;
                            cols[row + oy * w + ox] = if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                plane[iy as usize * w + ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let (kh, kw) = self.kernel_hw();
        let (ph, pw) = (kh / 2, kw / 2);
        let hw = h * w;
        for ci in 0..self.in_channels() {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ((ci * kh + ki) * kw + kj) * hw;
                    for oy in 0..h {
                        let iy = oy as isize + ki as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..w {
                            let ix = ox as isize + kj as isize - pw as isize;
                            if ix >= 0 && ix < w as isize {
                                dx[ci * hw + iy as usize * w + ix as usize] += cols[row + oy * w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `x [batch, in, h, w] -> [batch, out, h, w]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv2dCache<T>)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels() {
            return Err(Error::dim(
                "conv2d_forward",
                format!("x {:?} vs kernels {:?}", s, self.kernels.shape()),
            ));
        }
        let (batch, h, w) = (s[0], s[2], s[3]);
        let (kh, kw) = self.kernel_hw();
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let ck = cin * kh * kw;
        let hw = h * w;
        let mut cols = vec![T::zero(); ck * hw];
        let mut y = Tensor::zeros(&[batch, cout, h, w]);
        let bias = self.bias.value.data();
        for b in 0..batch {
            self.im2col(&x.data()[b * cin * hw..(b + 1) * cin * hw], h, w, &mut cols);
            let out = &mut y.data_mut()[b * cout * hw..(b + 1) * cout * hw];
            for (co, plane) in out.chunks_mut(hw).enumerate() {
                plane.fill(bias[co]);
            }
            mm_nn(cout, ck, hw, self.kernels.value.data(), &cols, out, true);
        }
        Ok((y, Conv2dCache { x: x.clone() }))
    }

    pub fn backward(&mut self, cache: &Conv2dCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let s = cache.x.shape();
        let (batch, h, w) = (s[0], s[2], s[3]);
        let (kh, kw) = self.kernel_hw();
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let ck = cin * kh * kw;
        let hw = h * w;
        assert_eq!(dy.shape(), [batch, cout, h, w], "conv2d backward grad shape");
        let mut cols = vec![T::zero(); ck * hw];
        let mut dcols = vec![T::zero(); ck * hw];
        let mut dx = Tensor::zeros(s);
        for b in 0..batch {
            let dyb = &dy.data()[b * cout * hw..(b + 1) * cout * hw];
            self.im2col(&cache.x.data()[b * cin * hw..(b + 1) * cin * hw], h, w, &mut cols);
            mm_nt(cout, hw, ck, dyb, &cols, self.kernels.grad.data_mut(), true);
            for (co, plane) in dyb.chunks(hw).enumerate() {
                self.bias.grad.data_mut()[co] += plane.iter().copied().sum::<T>();
            }
            mm_tn(ck, cout, hw, self.kernels.value.data(), dyb, &mut dcols, false);
            self.col2im_add(&dcols, h, w, &mut dx.data_mut()[b * cin * hw..(b + 1) * cin * hw]);
        }
        dx
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("kernels".into(), &self.kernels), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("kernels".into(), &mut self.kernels),
            ("bias".into(), &mut self.bias),
        ]
    }
}
