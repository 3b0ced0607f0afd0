use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::{augment_batch, reduce_replicas, AUGMENT_NOISE_STD};
use super::cnn::CnnModel;
use super::evaluate::predict_labels;
use super::train::{accuracy, check_labels};
use crate::dataset::{Window, WindowSet, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, NUM_FEATURES};
use crate::fin::{audit_no_test, imitate, time_major, FinSet};
use crate::nn::{adam_step, softmax_cross_entropy, AdamConfig, Module, Tensor};
use crate::scalar::Real;
use crate::seeds::stream_rng;

/// Raw input window and the class it should be assigned (the label of the target window
/// when predicting ahead).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointSample {
    pub window: Window,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub max_epochs: usize,
    pub patience: usize,
    /// Windows per step; every window feeds 12 sequences through each of the 4 networks.
    pub batch_windows: usize,
    pub val_fraction: f64,
    /// A tenth of the pretraining rate by default.
    pub lr: f64,
    pub weight_decay: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        JointConfig {
            max_epochs: 10,
            patience: 3,
            batch_windows: 4,
            val_fraction: 0.1,
            lr: 1e-4,
            weight_decay: adam.weight_decay,
            noise_std: AUGMENT_NOISE_STD,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub train_samples: usize,
    pub val_samples: usize,
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(skip)]
    pub seconds_per_epoch: Vec<f64>,
}

/// Imitate features with the networks, then classify them.
pub fn joint_predict<T: Real>(fins: &FinSet<T>, cnn: &mut CnnModel<T>, ws: &WindowSet, windows: &[Window], batch: usize) -> Result<Vec<u8>> {
    let feats = imitate(fins, ws, windows, batch * NUM_CHANNELS)?;
    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    predict_labels(cnn, &refs, batch)
}

/// One joint step; returns (loss, correct predictions).
fn joint_step<T: Real>(
    fins: &mut FinSet<T>,
    cnn: &mut CnnModel<T>,
    ws: &WindowSet,
    batch: &[JointSample],
    cfg: &JointConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, usize)> {
    let seqs: Vec<&[f64]> = batch
        .iter()
        .flat_map(|s| (0..NUM_CHANNELS).map(move |c| ws.channel(&s.window, c)))
        .collect();
    let n = seqs.len();
    let x = time_major::<T>(&seqs, fins[0].seq_len())?;

    let mut feats = vec![FeatureMatrix::zeros(true); batch.len()];
    let mut caches = Vec::with_capacity(NUM_FEATURES);
    for (f, m) in fins.iter_mut().enumerate() {
        m.zero_grad();
        let (y, cache) = m.forward_time_major(&x, n)?;
        for (i, v) in y.data().iter().enumerate() {
            feats[i / NUM_CHANNELS].values[f][i % NUM_CHANNELS] = v.as_f64();
        }
        caches.push(cache);
    }

    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    let aug = augment_batch::<T, _>(&refs, cfg.noise_std, rng);
    let targets: Vec<usize> = batch.iter().map(|s| s.label as usize - 1).collect();
    cnn.zero_grad();
    let (logits, cache) = cnn.forward_frozen_norm(&aug, rng)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, &targets)?;
    let dx = cnn.backward(&cache, &dlogits);
    let dfeat = reduce_replicas(&dx);

    for (f, (m, cache)) in fins.iter_mut().zip(caches).enumerate() {
        let mut dy = vec![T::zero(); n];
        for (i, g) in dy.iter_mut().enumerate() {
            let (b, c) = (i / NUM_CHANNELS, i % NUM_CHANNELS);
            *g = dfeat[(b * NUM_FEATURES + f) * NUM_CHANNELS + c];
        }
        m.backward(&cache, &Tensor::from_vec(&[n, 1], dy)?);
    }

    let adam = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    for m in fins.iter_mut() {
        adam_step(m, &adam);
    }
    adam_step(cnn, &adam);
    let hits = logits.argmax_rows().iter().zip(&targets).filter(|(a, b)| a == b).count();
    Ok((loss.as_f64(), hits))
}

/// Fine-tune the four networks and the classifier end to end: imitation, augmentation and
/// classification form one differentiable chain trained with cross-entropy. Batch norm runs
/// on its pretrained running statistics, which stay fixed, and the optimizer starts from
/// fresh moments. Early stopping
/// uses held-out accuracy; the models end at their best-validation parameters. Zero epochs
/// leaves everything untouched.
pub fn finetune_joint<T: Real>(
    fins: &mut FinSet<T>,
    cnn: &mut CnnModel<T>,
    ws: &WindowSet,
    data: &[JointSample],
    cfg: &JointConfig,
    stream: u64,
) -> Result<JointRecord> {
    if cfg.batch_windows == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::InvalidArgument("batch_windows must be positive and val_fraction in [0, 1)".into()));
    }
    check_labels(data.iter().map(|d| d.label), cnn.arch.classes)?;
    audit_no_test(data.iter().map(|d| d.window), "finetune_joint")?;

    let mut rng = stream_rng(cfg.seed, "joint-train", stream);
    let mut order: Vec<JointSample> = data.to_vec();
    order.shuffle(&mut rng);
    let n_val = if data.len() >= 10 {
        ((cfg.val_fraction * data.len() as f64).round() as usize).min(data.len() - 1)
    } else {
        0
    };
    let val: Vec<JointSample> = order[..n_val].to_vec();
    let mut train: Vec<JointSample> = order[n_val..].to_vec();
    let mut rec = JointRecord {
        train_samples: train.len(),
        val_samples: val.len(),
        train_loss: Vec::new(),
        train_acc: Vec::new(),
        val_acc: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        seconds_per_epoch: Vec::new(),
    };
    if cfg.max_epochs == 0 || train.is_empty() {
        return Ok(rec);
    }
    for m in fins.iter_mut() {
        m.reset_optimizer();
    }
    cnn.reset_optimizer();

    let mut best: Option<(f64, FinSet<T>, CnnModel<T>)> = None;
    let mut since_improvement = 0;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        train.shuffle(&mut rng);
        let (mut total, mut hits) = (0.0, 0usize);
        for batch in train.chunks(cfg.batch_windows) {
            let (loss, h) = joint_step(fins, cnn, ws, batch, cfg, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("joint fine-tuning loss {loss} at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            hits += h;
        }
        rec.train_loss.push(total / train.len() as f64);
        rec.train_acc.push(hits as f64 / train.len() as f64);
        let score = if val.is_empty() {
            *rec.train_acc.last().expect("pushed")
        } else {
            let windows: Vec<Window> = val.iter().map(|s| s.window).collect();
            let pred = joint_predict(fins, cnn, ws, &windows, cfg.batch_windows)?;
            accuracy(&pred, val.iter().map(|s| s.label))
        };
        rec.val_acc.push(score);
        rec.epochs_run = epoch;
        rec.seconds_per_epoch.push(started.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, fins.clone(), cnn.clone()));
            rec.best_epoch = epoch;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if since_improvement >= cfg.patience {
            break;
        }
    }
    if let Some((_, f, c)) = best {
        *fins = f;
        *cnn = c;
    }
    Ok(rec)
}
