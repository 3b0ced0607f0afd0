use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;
use crate::nn::activation::{DropoutMask, PReluCache};
use crate::nn::batchnorm::BatchNormCache;
use crate::nn::conv::Conv2dCache;
use crate::nn::dense::DenseCache;
use crate::nn::param::{scoped, scoped_mut};
use crate::nn::{global_avg_pool, global_avg_pool_backward, BatchNorm2d, Conv2d, Dense, Dropout, Mode, Module, PRelu, Param, Tensor};
use crate::scalar::Real;

/// Movement classes; label `k` maps to logit `k - 1`.
pub const NUM_CLASSES: usize = 17;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    pub in_channels: usize,
    /// Output channels of the three conv blocks.
    pub widths: [usize; 3],
    pub kernel: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for CnnArch {
    fn default() -> Self {
        CnnArch {
            in_channels: NUM_FEATURES,
            widths: [32, 64, 128],
            kernel: 3,
            classes: NUM_CLASSES,
            dropout: 0.3,
        }
    }
}

impl CnnArch {
    pub fn descriptor(&self) -> String {
        format!(
            "conv{}x{}:{}-{}-{}-{};dropout={};dense:{}",
            self.kernel, self.kernel, self.in_channels, self.widths[0], self.widths[1], self.widths[2], self.dropout, self.classes
        )
    }
}

/// Three (conv, batch-norm, PReLU) blocks, dropout after the first block, global average
/// pooling and a dense output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel<T> {
    pub arch: CnnArch,
    pub convs: Vec<Conv2d<T>>,
    pub norms: Vec<BatchNorm2d<T>>,
    pub acts: Vec<PRelu<T>>,
    pub dropout: Dropout,
    pub head: Dense<T>,
}

struct BlockCache<T> {
    conv: Conv2dCache<T>,
    norm: BatchNormCache<T>,
    act: PReluCache<T>,
}

pub struct CnnCache<T> {
    blocks: Vec<BlockCache<T>>,
    mask: DropoutMask<T>,
    pooled_shape: Vec<usize>,
    head: DenseCache<T>,
}

impl<T: Real> CnnModel<T> {
    pub fn new<R: Rng + ?Sized>(arch: CnnArch, rng: &mut R) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = arch.in_channels;
        for &w in &arch.widths {
            convs.push(Conv2d::new(cin, w, arch.kernel, rng));
            cin = w;
        }
        Ok(CnnModel {
            norms: arch.widths.iter().map(|&w| BatchNorm2d::new(w)).collect(),
            acts: (0..3).map(|_| PRelu::new()).collect(),
            dropout: Dropout::new(arch.dropout)?,
            head: Dense::new(cin, arch.classes, rng),
            convs,
            arch,
        })
    }

    /// `x [batch, 4, 12, 12] -> logits [batch, classes]`.
    ///
    /// Train mode uses batch statistics (and updates the running ones) and samples a dropout
    /// mask from `rng`; eval mode is deterministic.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<(Tensor<T>, CnnCache<T>)> {
        self.forward_split(x, mode, mode, rng)
    }

    /// Train-mode dropout over eval-mode batch norm: running statistics are used and left
    /// unchanged, while gamma and beta still receive gradients.
    pub fn forward_frozen_norm<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, rng: &mut R) -> Result<(Tensor<T>, CnnCache<T>)> {
        self.forward_split(x, Mode::Eval, Mode::Train, rng)
    }

    fn forward_split<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor<T>,
        norm_mode: Mode,
        drop_mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor<T>, CnnCache<T>)> {
        if x.shape().len() != 4 || x.dim(1) != self.arch.in_channels {
            return Err(Error::dim(
                "cnn_forward",
                format!("expected [batch, {}, h, w], got {:?}", self.arch.in_channels, x.shape()),
            ));
        }
        let mut blocks = Vec::with_capacity(3);
        let mut h = x.clone();
        let mut mask = DropoutMask::identity();
        for i in 0..3 {
            let (a, conv) = self.convs[i].forward(&h)?;
            let (b, norm) = self.norms[i].forward(&a, norm_mode)?;
            let (c, act) = self.acts[i].forward(&b);
            h = c;
            if i == 0 {
                let (d, m) = self.dropout.forward(&h, drop_mode, rng);
                h = d;
                mask = m;
            }
            blocks.push(BlockCache { conv, norm, act });
        }
        let pooled_shape = h.shape().to_vec();
        let p = global_avg_pool(&h);
        let (logits, head) = self.head.forward(&p)?;
        Ok((
            logits,
            CnnCache {
                blocks,
                mask,
                pooled_shape,
                head,
            },
        ))
    }

    /// Accumulate parameter gradients from `dL/dlogits`; returns `dL/dx`.
    pub fn backward(&mut self, cache: &CnnCache<T>, dlogits: &Tensor<T>) -> Tensor<T> {
        let dp = self.head.backward(&cache.head, dlogits);
        let mut d = global_avg_pool_backward(&dp, &cache.pooled_shape);
        for i in (0..3).rev() {
            if i == 0 {
                d = self.dropout.backward(&cache.mask, &d);
            }
            let blk = &cache.blocks[i];
            d = self.acts[i].backward(&blk.act, &d);
            d = self.norms[i].backward(&blk.norm, &d);
            d = self.convs[i].backward(&blk.conv, &d);
        }
        d
    }

    /// Per-block parameter counts followed by the head.
    pub fn param_report(&self) -> Vec<(String, usize)> {
        self.params().into_iter().map(|(n, p)| (n, p.len())).collect()
    }
}

impl<T: Real> Module<T> for CnnModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for i in 0..3 {
            out.extend(scoped(&format!("block{i}.conv"), self.convs[i].params()));
            out.extend(scoped(&format!("block{i}.bn"), self.norms[i].params()));
            out.extend(scoped(&format!("block{i}.prelu"), self.acts[i].params()));
        }
        out.extend(scoped("head", self.head.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        let CnnModel {
            convs, norms, acts, head, ..
        } = self;
        for (i, ((c, n), a)) in convs.iter_mut().zip(norms.iter_mut()).zip(acts.iter_mut()).enumerate() {
            out.extend(scoped_mut(&format!("block{i}.conv"), c.params_mut()));
            out.extend(scoped_mut(&format!("block{i}.bn"), n.params_mut()));
            out.extend(scoped_mut(&format!("block{i}.prelu"), a.params_mut()));
        }
        out.extend(scoped_mut("head", head.params_mut()));
        out
    }
}
