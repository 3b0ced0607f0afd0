use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::{augment_batch, AUGMENT_NOISE_STD};
use super::cnn::CnnModel;
use super::evaluate::predict_labels;
use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fin::audit_no_test;
use crate::nn::{adam_step, softmax_cross_entropy, AdamConfig, Mode, Module};
use crate::scalar::Real;
use crate::seeds::stream_rng;

/// A normalized feature matrix with its class label and the window it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeled {
    pub window: Window,
    pub label: u8,
    pub features: FeatureMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnTrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        CnnTrainConfig {
            max_epochs: 50,
            patience: 3,
            batch_size: 128,
            val_fraction: 0.1,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            noise_std: AUGMENT_NOISE_STD,
            seed: 0,
        }
    }
}

impl CnnTrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Per-epoch history; accuracies are fractions in `[0, 1]` and `best_epoch` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnRecord {
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

pub(crate) fn check_labels(labels: impl IntoIterator<Item = u8>, classes: usize) -> Result<()> {
    match labels.into_iter().find(|&l| l == 0 || l as usize > classes) {
        Some(l) => Err(Error::InvalidArgument(format!("label {l} outside 1..={classes}"))),
        None => Ok(()),
    }
}

pub(crate) fn accuracy(pred: &[u8], truth: impl IntoIterator<Item = u8>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        hit += (*p == t) as usize;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Cross-entropy training with noise resampled every epoch and early stopping on held-out
/// accuracy. `stream` separates the random streams of runs sharing one seed (for example one
/// per subject). The model ends at its best-validation parameters.
pub fn train_cnn<T: Real>(m: &mut CnnModel<T>, data: &[Labeled], cfg: &CnnTrainConfig, stream: u64) -> Result<CnnRecord> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no classifier training samples".into()));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::InvalidArgument("batch_size must be positive and val_fraction in [0, 1)".into()));
    }
    check_labels(data.iter().map(|d| d.label), m.arch.classes)?;
    audit_no_test(data.iter().map(|d| d.window), "train_cnn")?;

    let mut rng = stream_rng(cfg.seed, "cnn-train", stream);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if data.len() >= 10 {
        ((cfg.val_fraction * data.len() as f64).round() as usize).min(data.len() - 1)
    } else {
        0
    };
    let val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();

    let adam = cfg.adam();
    let mut rec = CnnRecord {
        train_samples: train.len(),
        val_samples: val.len(),
        train_loss: Vec::new(),
        train_acc: Vec::new(),
        val_acc: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        seconds_per_epoch: Vec::new(),
    };
    let mut best: Option<(f64, CnnModel<T>)> = None;
    let mut since_improvement = 0;
    for epoch in 1..=cfg.max_epochs.max(1) {
        let started = Instant::now();
        train.shuffle(&mut rng);
        let (mut total, mut hits) = (0.0, 0usize);
        for batch in train.chunks(cfg.batch_size) {
            let feats: Vec<&FeatureMatrix> = batch.iter().map(|&i| &data[i].features).collect();
            let x = augment_batch::<T, _>(&feats, cfg.noise_std, &mut rng);
            let targets: Vec<usize> = batch.iter().map(|&i| data[i].label as usize - 1).collect();
            m.zero_grad();
            let (logits, cache) = m.forward(&x, Mode::Train, &mut rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &targets)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("classifier loss {loss} at epoch {epoch}")));
            }
            m.backward(&cache, &dlogits);
            adam_step(m, &adam);
            total += loss * batch.len() as f64;
            hits += logits.argmax_rows().iter().zip(&targets).filter(|(a, b)| a == b).count();
        }
        rec.train_loss.push(total / train.len() as f64);
        rec.train_acc.push(hits as f64 / train.len() as f64);
        let score = if val.is_empty() {
            *rec.train_acc.last().expect("pushed")
        } else {
            let feats: Vec<&FeatureMatrix> = val.iter().map(|&i| &data[i].features).collect();
            let pred = predict_labels(m, &feats, cfg.batch_size)?;
            accuracy(&pred, val.iter().map(|&i| data[i].label))
        };
        rec.val_acc.push(score);
        rec.epochs_run = epoch;
        rec.seconds_per_epoch.push(started.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, m.clone()));
            rec.best_epoch = epoch;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if since_improvement >= cfg.patience {
            break;
        }
    }
    if let Some((_, b)) = best {
        *m = b;
    }
    Ok(rec)
}
