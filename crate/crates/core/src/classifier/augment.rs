use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::NUM_CHANNELS;
use crate::features::{FeatureMatrix, NUM_FEATURES};
use crate::nn::Tensor;
use crate::scalar::Real;

/// Rows per feature slab after dilation.
pub const REPLICAS: usize = 12;
pub const AUGMENT_NOISE_STD: f64 = 0.01;

const SLAB: usize = REPLICAS * NUM_CHANNELS;
const SAMPLE: usize = NUM_FEATURES * SLAB;

fn fill<T: Real, R: Rng + ?Sized>(m: &FeatureMatrix, noise_std: f64, rng: &mut R, out: &mut [T]) {
    let normal = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    for f in 0..NUM_FEATURES {
        let src = &m.values[f];
        let slab = &mut out[f * SLAB..(f + 1) * SLAB];
        for (c, &v) in src.iter().enumerate() {
            slab[c] = T::lit(v);
        }
        for r in 1..REPLICAS {
            for (c, &v) in src.iter().enumerate() {
                let noise = if noise_std > 0.0 { normal.sample(rng) } else { 0.0 };
                slab[r * NUM_CHANNELS + c] = T::lit(v + noise);
            }
        }
    }
}

/// Expand a feature matrix into a `[4, 12, 12]` tensor: row 0 of every slab is the source
/// row, rows 1..12 add independent `N(0, noise_std²)` noise.
pub fn augment<T: Real, R: Rng + ?Sized>(m: &FeatureMatrix, noise_std: f64, rng: &mut R) -> Tensor<T> {
    let mut data = vec![T::zero(); SAMPLE];
    fill(m, noise_std, rng, &mut data);
    Tensor::from_vec(&[NUM_FEATURES, REPLICAS, NUM_CHANNELS], data).expect("augment shape")
}

/// Batched [`augment`], `[batch, 4, 12, 12]`.
pub fn augment_batch<T: Real, R: Rng + ?Sized>(ms: &[&FeatureMatrix], noise_std: f64, rng: &mut R) -> Tensor<T> {
    let mut data = vec![T::zero(); ms.len() * SAMPLE];
    for (m, out) in ms.iter().zip(data.chunks_mut(SAMPLE)) {
        fill(m, noise_std, rng, out);
    }
    Tensor::from_vec(&[ms.len(), NUM_FEATURES, REPLICAS, NUM_CHANNELS], data).expect("augment shape")
}

/// Gradient of the augmentation with respect to its source: sums over replica rows.
/// `[batch, 4, 12, 12] -> [batch, 4, 12]` flattened.
pub fn reduce_replicas<T: Real>(d: &Tensor<T>) -> Vec<T> {
    let batch = d.dim(0);
    let mut out = vec![T::zero(); batch * NUM_FEATURES * NUM_CHANNELS];
    for (b, sample) in d.data().chunks(SAMPLE).enumerate() {
        for f in 0..NUM_FEATURES {
            let o = &mut out[(b * NUM_FEATURES + f) * NUM_CHANNELS..(b * NUM_FEATURES + f + 1) * NUM_CHANNELS];
            for r in 0..REPLICAS {
                let row = &sample[f * SLAB + r * NUM_CHANNELS..f * SLAB + (r + 1) * NUM_CHANNELS];
                for (acc, &g) in o.iter_mut().zip(row) {
                    *acc += g;
                }
            }
        }
    }
    out
}
