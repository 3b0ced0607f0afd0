//! Feature-imitation networks: one bidirectional LSTM regressor per feature type, mapping a
//! single-channel 600-sample sequence to that channel's normalized feature value.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Split, Window, WindowSet, NUM_CHANNELS, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix, FeatureStats, NUM_FEATURES};
use crate::nn::lstm::BiLstmCache;
use crate::nn::param::{scoped, scoped_mut};
use crate::nn::{adam_step, clip_grad_norm, mse_loss, AdamConfig, BiLstm, Dense, Module, Param, Tensor};
use crate::scalar::Real;
use crate::seeds::stream_rng;

pub const FIN_HIDDEN: usize = 32;
pub const FIN_LAYERS: usize = 3;

/// Bidirectional LSTM stack followed by a dense head producing one value.
#[derive(Clone, Debug, PartialEq)]
pub struct FinModel<T> {
    pub feature: FeatureKind,
    pub lstm: BiLstm<T>,
    pub head: Dense<T>,
}

pub struct FinCache<T> {
    lstm: BiLstmCache<T>,
    head: crate::nn::dense::DenseCache<T>,
}

impl<T: Real> FinModel<T> {
    /// The standard imitation network: 3 layers, 32 hidden units per direction, length 600.
    pub fn new<R: Rng + ?Sized>(feature: FeatureKind, rng: &mut R) -> Self {
        Self::with_arch(feature, WINDOW_LEN, FIN_HIDDEN, FIN_LAYERS, rng)
    }

    pub fn with_arch<R: Rng + ?Sized>(feature: FeatureKind, seq_len: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        FinModel {
            feature,
            lstm: BiLstm::new(seq_len, 1, hidden, layers, rng),
            head: Dense::new(2 * hidden, 1, rng),
        }
    }

    pub fn zeros(feature: FeatureKind) -> Self {
        FinModel {
            feature,
            lstm: BiLstm::zeros(WINDOW_LEN, 1, FIN_HIDDEN, FIN_LAYERS),
            head: Dense::zeros(2 * FIN_HIDDEN, 1),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.lstm.seq_len()
    }

    /// `x [batch, seq_len, 1] -> [batch, 1]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FinCache<T>)> {
        let (h, lstm) = self.lstm.forward(x)?;
        let (y, head) = self.head.forward(&h)?;
        Ok((y, FinCache { lstm, head }))
    }

    /// Forward over `batch` sequences laid out time-major (`x[t * batch + b]`).
    pub fn forward_time_major(&self, x: &[T], batch: usize) -> Result<(Tensor<T>, FinCache<T>)> {
        if x.len() != self.seq_len() * batch {
            return Err(Error::dim(
                "fin_forward",
                format!("{} values for {batch} sequences of length {}", x.len(), self.seq_len()),
            ));
        }
        let (h, lstm) = self.lstm.forward_time_major(x, batch)?;
        let (y, head) = self.head.forward(&h)?;
        Ok((y, FinCache { lstm, head }))
    }

    /// Accumulate parameter gradients from `dL/dy [batch, 1]`.
    pub fn backward(&mut self, cache: &FinCache<T>, dy: &Tensor<T>) {
        let dh = self.head.backward(&cache.head, dy);
        self.lstm.backward_time_major(&cache.lstm, &dh);
    }

    /// Predictions for single-channel sequences, evaluated `batch` at a time.
    pub fn predict(&self, seqs: &[&[f64]], batch: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(batch.max(1)) {
            let x = time_major(chunk, self.seq_len())?;
            let (y, _) = self.forward_time_major(&x, chunk.len())?;
            out.extend(y.data().iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }

    /// Architecture summary used to validate checkpoints.
    pub fn descriptor(&self) -> String {
        let layers = self.lstm.layers();
        format!(
            "bilstm:seq={},in={},hidden={},layers={};dense:{}x{}",
            self.lstm.seq_len(),
            self.lstm.input_dim(),
            layers[0].hidden_dim(),
            layers.len(),
            self.head.input_dim(),
            self.head.output_dim()
        )
    }

    /// Trainable parameter count per named tensor, in declaration order.
    pub fn param_report(&self) -> Vec<(String, usize)> {
        self.params().into_iter().map(|(n, p)| (n, p.len())).collect()
    }
}

impl<T: Real> Module<T> for FinModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out: Vec<_> = scoped("lstm", self.lstm.params()).collect();
        out.extend(scoped("head", self.head.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out: Vec<_> = scoped_mut("lstm", self.lstm.params_mut()).collect();
        out.extend(scoped_mut("head", self.head.params_mut()));
        out
    }
}

/// Pack equal-length sequences time-major.
pub fn time_major<T: Real>(seqs: &[&[f64]], seq_len: usize) -> Result<Vec<T>> {
    let batch = seqs.len();
    let mut x = vec![T::zero(); seq_len * batch];
    for (b, s) in seqs.iter().enumerate() {
        if s.len() != seq_len {
            return Err(Error::dim("fin_forward", format!("sequence length {} != {seq_len}", s.len())));
        }
        for (t, &v) in s.iter().enumerate() {
            x[t * batch + b] = T::lit(v);
        }
    }
    Ok(x)
}

/// Prediction horizon in milliseconds; the target window starts this much later.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HorizonSpec {
    horizon_ms: u32,
}

impl HorizonSpec {
    pub const SWEEP_MS: [u32; 7] = [0, 50, 100, 150, 200, 250, 300];

    pub fn new(horizon_ms: u32) -> Result<Self> {
        if !Self::SWEEP_MS.contains(&horizon_ms) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon_ms} ms is not one of 0, 50, 100, 150, 200, 250, 300"
            )));
        }
        Ok(HorizonSpec { horizon_ms })
    }

    pub fn zero() -> Self {
        HorizonSpec { horizon_ms: 0 }
    }

    pub fn ms(self) -> u32 {
        self.horizon_ms
    }

    pub fn samples(self) -> usize {
        crate::dataset::ms_to_samples(self.horizon_ms)
    }
}

/// One (window, channel) regression example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinPair {
    pub window: Window,
    pub channel: usize,
    /// Start of the window whose feature is the target.
    pub target_start: usize,
    /// Normalized target feature.
    pub y: f64,
}

#[derive(Debug)]
pub struct FinPairs {
    pub feature: FeatureKind,
    pub horizon: HorizonSpec,
    pub windows: WindowSet,
    pub pairs: Vec<FinPair>,
    /// Windows without a usable target window at this horizon.
    pub skipped_windows: usize,
}

impl FinPairs {
    pub fn x(&self, p: &FinPair) -> &[f64] {
        self.windows.channel(&p.window, p.channel)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn with_pairs(&self, pairs: Vec<FinPair>) -> FinPairs {
        FinPairs {
            pairs,
            windows: self.windows.clone(),
            ..*self
        }
    }
}

impl Clone for FinPairs {
    fn clone(&self) -> Self {
        self.with_pairs(self.pairs.clone())
    }
}

/// Target window for `w` at horizon `h`: `w` itself at zero, otherwise the labelled window
/// `h` samples later in the same recording and split.
pub fn target_window(ws: &WindowSet, w: &Window, h: HorizonSpec) -> Option<Window> {
    if h.samples() == 0 {
        return Some(*w);
    }
    ws.window_after(w, h.samples()).filter(|t| t.split == w.split)
}

/// One pair per (window, channel) with the normalized feature of the target window.
pub fn make_training_pairs(ws: &WindowSet, feature: FeatureKind, h: HorizonSpec, stats: &FeatureStats) -> FinPairs {
    let mut pairs = Vec::with_capacity(ws.len() * NUM_CHANNELS);
    let mut skipped = 0;
    for w in ws.iter() {
        let Some(t) = target_window(ws, w, h) else {
            skipped += 1;
            continue;
        };
        for c in 0..NUM_CHANNELS {
            let raw = feature.compute(ws.channel(&t, c));
            pairs.push(FinPair {
                window: *w,
                channel: c,
                target_start: t.start_index,
                y: stats.normalize(feature, raw),
            });
        }
    }
    FinPairs {
        feature,
        horizon: h,
        windows: ws.clone(),
        pairs,
        skipped_windows: skipped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinTrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Learning rate multiplier applied after every epoch without validation improvement.
    pub lr_decay: f64,
    /// Global gradient-norm bound per step; zero disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for FinTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        FinTrainConfig {
            max_epochs: 50,
            patience: 3,
            batch_size: 256,
            val_fraction: 0.1,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            lr_decay: 1.0,
            clip_norm: 0.0,
            seed: 0,
        }
    }
}

impl FinTrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Loss history of one training run. `best_epoch` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub feature: FeatureKind,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(skip)]
    pub seconds_per_epoch: Vec<f64>,
}

/// Reject any training example drawn from the test split.
pub(crate) fn audit_no_test(windows: impl IntoIterator<Item = Window>, what: &str) -> Result<()> {
    match windows.into_iter().find(|w| w.split == Split::Test) {
        Some(w) => Err(Error::InvalidArgument(format!(
            "{what}: test-split window (subject {}, repetition {}, start {}) in training data",
            w.subject_id, w.repetition, w.start_index
        ))),
        None => Ok(()),
    }
}

/// Mean squared error of the model over `pairs`.
pub fn fin_loss<T: Real>(m: &FinModel<T>, data: &FinPairs, pairs: &[FinPair], batch: usize) -> Result<f64> {
    let seqs: Vec<&[f64]> = pairs.iter().map(|p| data.x(p)).collect();
    let pred = m.predict(&seqs, batch)?;
    Ok(pred.iter().zip(pairs).map(|(a, p)| (a - p.y).powi(2)).sum::<f64>() / pairs.len().max(1) as f64)
}

/// One optimizer step on `batch`; returns the batch loss.
pub fn fin_train_step<T: Real>(
    m: &mut FinModel<T>,
    data: &FinPairs,
    batch: &[FinPair],
    adam: &AdamConfig,
    clip_norm: f64,
) -> Result<f64> {
    let seqs: Vec<&[f64]> = batch.iter().map(|p| data.x(p)).collect();
    let x = time_major::<T>(&seqs, m.seq_len())?;
    let target = Tensor::from_vec(&[batch.len(), 1], batch.iter().map(|p| T::lit(p.y)).collect())?;
    m.zero_grad();
    let (y, cache) = m.forward_time_major(&x, batch.len())?;
    let (loss, dy) = mse_loss(&y, &target)?;
    m.backward(&cache, &dy);
    clip_grad_norm(m, clip_norm);
    adam_step(m, adam);
    Ok(loss.as_f64())
}

/// Train with MSE and early stopping on a held-out validation fraction. The model ends at
/// its best-validation parameters.
pub fn train_fin<T: Real>(m: &mut FinModel<T>, data: &FinPairs, cfg: &FinTrainConfig) -> Result<ConvergenceRecord> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("no training pairs for the {} network", m.feature)));
    }
    if data.feature != m.feature {
        return Err(Error::InvalidArgument(format!(
            "{} pairs given to the {} network",
            data.feature, m.feature
        )));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::InvalidArgument("batch_size must be positive and val_fraction in [0, 1)".into()));
    }
    if !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) || !(cfg.clip_norm >= 0.0) {
        return Err(Error::InvalidArgument("lr_decay must be in (0, 1] and clip_norm non-negative".into()));
    }
    audit_no_test(data.pairs.iter().map(|p| p.window), "train_fin")?;

    let mut rng = stream_rng(cfg.seed, "fin-train", m.feature.index() as u64);
    let mut order = data.pairs.clone();
    order.shuffle(&mut rng);
    let n_val = if order.len() >= 2 {
        ((cfg.val_fraction * order.len() as f64).round() as usize).min(order.len() - 1)
    } else {
        0
    };
    let val: Vec<FinPair> = order[..n_val].to_vec();
    let mut train: Vec<FinPair> = order[n_val..].to_vec();

    let mut adam = cfg.adam();
    let mut rec = ConvergenceRecord {
        feature: m.feature,
        train_pairs: train.len(),
        val_pairs: val.len(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        seconds_per_epoch: Vec::new(),
    };
    let mut best = (f64::INFINITY, m.clone());
    let mut since_improvement = 0;
    for epoch in 1..=cfg.max_epochs.max(1) {
        let started = Instant::now();
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, batch) in train.chunks(cfg.batch_size).enumerate() {
            let loss = fin_train_step(m, data, batch, &adam, cfg.clip_norm)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "{} network: loss {loss} at epoch {epoch}, batch {bi}",
                    m.feature
                )));
            }
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            fin_loss(m, data, &val, cfg.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("{} network: validation loss {val_loss} at epoch {epoch}", m.feature)));
        }
        rec.train_loss.push(train_loss);
        rec.val_loss.push(val_loss);
        rec.epochs_run = epoch;
        rec.seconds_per_epoch.push(started.elapsed().as_secs_f64());
        if val_loss < best.0 {
            best = (val_loss, m.clone());
            rec.best_epoch = epoch;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            adam.lr *= cfg.lr_decay;
        }
        if since_improvement >= cfg.patience {
            break;
        }
    }
    *m = best.1;
    Ok(rec)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn eval_r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "r2 needs two equal-length vectors of at least 2 values (got {} and {})",
            pred.len(),
            truth.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::InvalidArgument("r2 is undefined for a constant truth vector".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute percentage agreement `100 (1 - mean(|p - y| / (|y| + eps)))`.
pub fn eval_map(pred: &[f64], truth: &[f64], eps: f64) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidArgument("map needs two equal-length non-empty vectors".into()));
    }
    let err: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).abs() / (y.abs() + eps)).sum();
    Ok(100.0 * (1.0 - err / truth.len() as f64))
}

pub const MAP_EPS: f64 = 1e-8;

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Imitation quality of one network on a pair set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinEval {
    pub feature: FeatureKind,
    pub pairs: usize,
    /// Pooled over every (window, channel) pair, normalized scale.
    pub r2: f64,
    /// Pooled, raw feature scale.
    pub map: f64,
    /// Per-window R² across the 12 channels: mean and standard deviation.
    pub r2_window_mean: f64,
    pub r2_window_std: f64,
    /// Per-window MAP across the 12 channels: mean and standard deviation.
    pub map_window_mean: f64,
    pub map_window_std: f64,
    /// Per-window R² values, in window order. Windows whose channels share one value are omitted.
    pub r2_per_window: Vec<f64>,
}

/// Evaluate against `data` (normalized targets); MAP is computed after de-normalizing.
pub fn evaluate_fin<T: Real>(m: &FinModel<T>, data: &FinPairs, stats: &FeatureStats, batch: usize) -> Result<FinEval> {
    let seqs: Vec<&[f64]> = data.pairs.iter().map(|p| data.x(p)).collect();
    let pred = m.predict(&seqs, batch)?;
    fin_eval_from_predictions(data, &pred, stats)
}

pub fn fin_eval_from_predictions(data: &FinPairs, pred: &[f64], stats: &FeatureStats) -> Result<FinEval> {
    let kind = data.feature;
    let truth: Vec<f64> = data.pairs.iter().map(|p| p.y).collect();
    let raw_pred: Vec<f64> = pred.iter().map(|&v| stats.denormalize(kind, v)).collect();
    let raw_truth: Vec<f64> = truth.iter().map(|&v| stats.denormalize(kind, v)).collect();
    let r2 = eval_r2(pred, &truth)?;
    let map = eval_map(&raw_pred, &raw_truth, MAP_EPS)?;

    let mut r2_per_window = Vec::new();
    let mut map_per_window = Vec::new();
    let mut i = 0;
    while i < data.pairs.len() {
        let w = data.pairs[i].window;
        let mut j = i;
        while j < data.pairs.len() && data.pairs[j].window == w {
            j += 1;
        }
        if let Ok(r) = eval_r2(&pred[i..j], &truth[i..j]) {
            r2_per_window.push(r);
        }
        map_per_window.push(eval_map(&raw_pred[i..j], &raw_truth[i..j], MAP_EPS)?);
        i = j;
    }
    let (r2_window_mean, r2_window_std) = mean_std(&r2_per_window);
    let (map_window_mean, map_window_std) = mean_std(&map_per_window);
    Ok(FinEval {
        feature: kind,
        pairs: truth.len(),
        r2,
        map,
        r2_window_mean,
        r2_window_std,
        map_window_mean,
        map_window_std,
        r2_per_window,
    })
}

/// The four networks in [`FeatureKind::ALL`] order.
pub type FinSet<T> = [FinModel<T>; NUM_FEATURES];

/// Imitated normalized feature matrices: network `f` applied to every channel of every window.
pub fn imitate<T: Real>(fins: &FinSet<T>, ws: &WindowSet, windows: &[Window], batch: usize) -> Result<Vec<FeatureMatrix>> {
    for (k, m) in FeatureKind::ALL.iter().zip(fins.iter()) {
        if m.feature != *k {
            return Err(Error::InvalidArgument(format!("network {} found in the {k} slot", m.feature)));
        }
    }
    let seqs: Vec<&[f64]> = windows
        .iter()
        .flat_map(|w| (0..NUM_CHANNELS).map(move |c| ws.channel(w, c)))
        .collect();
    let mut out = vec![FeatureMatrix::zeros(true); windows.len()];
    for (f, m) in fins.iter().enumerate() {
        let pred = m.predict(&seqs, batch)?;
        for (i, v) in pred.into_iter().enumerate() {
            out[i / NUM_CHANNELS].values[f][i % NUM_CHANNELS] = v;
        }
    }
    Ok(out)
}
