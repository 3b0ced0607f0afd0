//! Experiment drivers shared by the command-line tool and the tests.

use std::collections::BTreeMap;
use std::path::Path;

use crate::classifier::{
    finetune_joint, joint_predict, predict_labels, subject_accuracies, train_cnn, CnnArch, CnnModel, CnnRecord,
    JointRecord, JointSample, Labeled,
};
use crate::dataset::{load_dir, subsample_finetune, synth_generate, zscore_channels, Recording, Split, Window, WindowSet};
use crate::error::{Error, Result};
use crate::features::{extract, extract_all, FeatureKind, FeatureStats};
use crate::fin::{
    evaluate_fin, make_training_pairs, target_window, train_fin, ConvergenceRecord, FinModel, FinPairs, FinSet,
    HorizonSpec,
};
use crate::nn::Module;
use crate::seeds::stream_rng;

use super::checkpoint::{
    cnn_checkpoint, fin_checkpoint, fin_file_name, joint_checkpoint, load_fin_set, restore_joint, Checkpoint,
    CheckpointKind,
};
use super::config::{Experiment, ExperimentConfig};
use super::report::{DataSummary, ExperimentReport, FinRow, ModelResult, ParamCount, TrainingRun, REFERENCE_FIN_PARAMS};

/// Windows evaluated per forward pass when the imitation networks run on whole windows.
const EVAL_WINDOWS_PER_BATCH: usize = 8;

pub const MODEL_CNN_I: &str = "CNN-I";
pub const MODEL_CNN_II: &str = "CNN-II";
pub const MODEL_JOINT: &str = "FIN+CNN-II";
pub const MODEL_BASELINE: &str = "LSTM+CNN-II";

/// Recordings named by the configuration: loaded from `data_dir` or generated.
pub fn load_recordings(cfg: &ExperimentConfig) -> Result<(Vec<Recording>, String)> {
    match &cfg.data_dir {
        Some(dir) => {
            let mut recs = load_dir(dir)?;
            if !cfg.subjects.is_empty() {
                recs.retain(|r| cfg.subjects.contains(&r.subject_id));
            }
            if recs.is_empty() {
                return Err(Error::Config(format!("no subject files for the selected subjects in {}", dir.display())));
            }
            Ok((recs, dir.display().to_string()))
        }
        None => Ok((synth_generate(&cfg.synth_spec())?, "synthetic".to_string())),
    }
}

/// Normalized, segmented data plus feature statistics fit on the pre-training split.
pub struct Prepared {
    pub windows: WindowSet,
    pub stats: FeatureStats,
    pub source: String,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (recs, source) = load_recordings(cfg)?;
        Self::from_recordings(cfg, recs, source)
    }

    pub fn from_recordings(cfg: &ExperimentConfig, recs: Vec<Recording>, source: String) -> Result<Self> {
        let normalized = recs
            .iter()
            .map(|r| zscore_channels(r, None).map(|(n, _)| n))
            .collect::<Result<Vec<_>>>()?;
        drop(recs);
        let windows = WindowSet::from_recordings(normalized)?.thin(cfg.window_thin);
        let pretrain = windows.split(Split::Pretrain);
        if pretrain.is_empty() {
            return Err(Error::InvalidArgument("no pre-training windows".into()));
        }
        let stats = FeatureStats::fit(&extract_all(&pretrain))?;
        Ok(Prepared { windows, stats, source })
    }

    pub fn summary(&self) -> DataSummary {
        DataSummary {
            source: self.source.clone(),
            subjects: self.windows.subjects(),
            pretrain_windows: self.windows.iter().filter(|w| w.split == Split::Pretrain).count(),
            finetune_windows: self.windows.iter().filter(|w| w.split == Split::Finetune).count(),
            test_windows: self.windows.iter().filter(|w| w.split == Split::Test).count(),
        }
    }
}

/// Evenly spaced subset of at most `max` windows (all when `max` is 0).
pub fn spread<W: Copy>(windows: Vec<W>, max: usize) -> Vec<W> {
    if max == 0 || windows.len() <= max {
        return windows;
    }
    (0..max).map(|i| windows[i * windows.len() / max]).collect()
}

/// Windows whose target at `h` exists, paired with the target.
fn with_targets(ws: &WindowSet, windows: &[Window], h: HorizonSpec) -> Vec<(Window, Window)> {
    windows
        .iter()
        .filter_map(|w| target_window(ws, w, h).map(|t| (*w, t)))
        .collect()
}

/// Ground-truth normalized features of each target, labelled with the target's class.
fn labeled(ws: &WindowSet, pairs: &[(Window, Window)], stats: &FeatureStats) -> Vec<Labeled> {
    pairs
        .iter()
        .map(|(w, t)| Labeled {
            window: *w,
            label: t.label,
            features: stats.apply(&extract(ws, t)),
        })
        .collect()
}

/// The four imitation networks for one horizon with their training histories.
#[derive(Clone, Debug)]
pub struct TrainedFins {
    pub horizon: HorizonSpec,
    pub nets: FinSet<f64>,
    pub records: Vec<ConvergenceRecord>,
}

fn fin_run(r: &ConvergenceRecord, h: u32) -> TrainingRun {
    TrainingRun {
        name: format!("FIN-{}", r.feature),
        subject: None,
        horizon_ms: h,
        fraction: 1.0,
        train_samples: r.train_pairs,
        val_samples: r.val_pairs,
        epochs_run: r.epochs_run,
        epochs_to_converge: r.best_epoch,
        final_train_loss: r.train_loss.last().copied().unwrap_or(f64::NAN),
        train_loss: r.train_loss.clone(),
        val_metric: r.val_loss.clone(),
        seconds_per_epoch: r.seconds_per_epoch.clone(),
    }
}

fn cnn_run(name: &str, r: &CnnRecord, subject: Option<u32>, h: u32, fraction: f64) -> TrainingRun {
    TrainingRun {
        name: name.to_string(),
        subject,
        horizon_ms: h,
        fraction,
        train_samples: r.train_samples,
        val_samples: r.val_samples,
        epochs_run: r.epochs_run,
        epochs_to_converge: r.best_epoch,
        final_train_loss: r.train_loss.last().copied().unwrap_or(f64::NAN),
        train_loss: r.train_loss.clone(),
        val_metric: r.val_acc.clone(),
        seconds_per_epoch: r.seconds_per_epoch.clone(),
    }
}

fn joint_run(name: &str, r: &JointRecord, subject: u32, h: u32, fraction: f64) -> TrainingRun {
    TrainingRun {
        name: name.to_string(),
        subject: Some(subject),
        horizon_ms: h,
        fraction,
        train_samples: r.train_samples,
        val_samples: r.val_samples,
        epochs_run: r.epochs_run,
        epochs_to_converge: r.best_epoch,
        final_train_loss: r.train_loss.last().copied().unwrap_or(f64::NAN),
        train_loss: r.train_loss.clone(),
        val_metric: r.val_acc.clone(),
        seconds_per_epoch: r.seconds_per_epoch.clone(),
    }
}

/// Count of windows fed to fitting or training, and how many of them were test windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HygieneAudit {
    pub checked: usize,
    pub test_windows: usize,
}

impl HygieneAudit {
    fn record(&mut self, windows: impl IntoIterator<Item = Window>) {
        for w in windows {
            self.checked += 1;
            if w.split == Split::Test {
                self.test_windows += 1;
            }
        }
    }
}

/// Per-subject models produced by one fine-tuning pass.
pub struct SubjectModels {
    pub subject: u32,
    pub cnn: CnnModel<f64>,
    pub fins: FinSet<f64>,
    pub joint_cnn: CnnModel<f64>,
}

/// Shared state for a configuration: prepared data and trained models, cached by horizon so
/// that every experiment sees the same networks for the same horizon.
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub prep: Prepared,
    pub audit: HygieneAudit,
    fins: BTreeMap<u32, TrainedFins>,
    cnn_pre: BTreeMap<u32, (CnnModel<f64>, CnnRecord)>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let prep = Prepared::new(&cfg)?;
        Ok(Self::with_prepared(cfg, prep))
    }

    pub fn with_prepared(cfg: ExperimentConfig, prep: Prepared) -> Self {
        let mut audit = HygieneAudit::default();
        audit.record(prep.windows.iter().copied().filter(|w| w.split == Split::Pretrain));
        Pipeline {
            cfg,
            prep,
            audit,
            fins: BTreeMap::new(),
            cnn_pre: BTreeMap::new(),
        }
    }

    fn cnn_arch(&self) -> CnnArch {
        CnnArch {
            widths: self.cfg.cnn_widths,
            ..CnnArch::default()
        }
    }

    fn fin_batch(&self) -> usize {
        self.cfg.fin.batch_size.clamp(1, 64)
    }

    fn base_report(&self, experiment: &str) -> ExperimentReport {
        ExperimentReport {
            experiment: experiment.to_string(),
            seed: self.cfg.seed,
            config: self.cfg.to_pairs().into_iter().collect(),
            data: self.prep.summary(),
            ..Default::default()
        }
    }

    fn finish(&self, mut r: ExperimentReport) -> ExperimentReport {
        if r.warnings.iter().all(|w| !w.starts_with("hygiene")) && self.audit.test_windows > 0 {
            r.warnings.push(format!("hygiene: {} test windows reached training", self.audit.test_windows));
        }
        r
    }

    /// Training pairs for one network at `h`, capped by `fin.max_pairs`.
    pub fn fin_pairs(&self, kind: FeatureKind, h: HorizonSpec, split: Split) -> FinPairs {
        let ws = self.prep.windows.split(split);
        let data = make_training_pairs(&ws, kind, h, &self.prep.stats);
        let cap = if split == Split::Test {
            self.cfg.fin_eval_max_pairs
        } else {
            self.cfg.fin_max_pairs
        };
        if cap == 0 || data.len() <= cap {
            return data;
        }
        if split == Split::Test {
            // Keep whole windows so per-window statistics stay meaningful.
            let windows: Vec<Window> = ws.windows().to_vec();
            let keep = spread(windows, (cap / crate::dataset::NUM_CHANNELS).max(1));
            let pairs = data.pairs.iter().filter(|p| keep.binary_search_by(|w| cmp_window(w, &p.window)).is_ok()).copied().collect();
            return data.with_pairs(pairs);
        }
        use rand::seq::index::sample;
        let mut rng = stream_rng(self.cfg.seed, "fin-pairs", kind.index() as u64);
        let mut idx = sample(&mut rng, data.len(), cap).into_vec();
        idx.sort_unstable();
        let pairs = idx.into_iter().map(|i| data.pairs[i]).collect();
        data.with_pairs(pairs)
    }

    /// Install externally trained networks for `h`.
    pub fn set_fins(&mut self, nets: FinSet<f64>, h: HorizonSpec) {
        self.fins.insert(
            h.ms(),
            TrainedFins {
                horizon: h,
                nets,
                records: Vec::new(),
            },
        );
    }

    /// The networks for `h`, training them on the pre-training split on first use.
    pub fn fins(&mut self, h: HorizonSpec) -> Result<&TrainedFins> {
        if !self.fins.contains_key(&h.ms()) {
            let mut nets = Vec::new();
            let mut records = Vec::new();
            for kind in FeatureKind::ALL {
                let data = self.fin_pairs(kind, h, Split::Pretrain);
                self.audit.record(data.pairs.iter().map(|p| p.window));
                let mut rng = stream_rng(self.cfg.seed, "fin-init", kind.index() as u64);
                let mut m = FinModel::new(kind, &mut rng);
                records.push(train_fin(&mut m, &data, &self.cfg.fin_train())?);
                nets.push(m);
            }
            let nets: FinSet<f64> = nets.try_into().map_err(|_| Error::Internal("four networks".into()))?;
            self.fins.insert(h.ms(), TrainedFins { horizon: h, nets, records });
        }
        Ok(&self.fins[&h.ms()])
    }

    /// Imitation quality of the networks for `h` on the test split.
    pub fn evaluate_fins(&mut self, h: HorizonSpec) -> Result<Vec<FinRow>> {
        let batch = self.fin_batch();
        let nets = self.fins(h)?.nets.clone();
        let mut rows = Vec::new();
        for (kind, m) in FeatureKind::ALL.into_iter().zip(nets.iter()) {
            let data = self.fin_pairs(kind, h, Split::Test);
            rows.push(FinRow {
                horizon_ms: h.ms(),
                eval: evaluate_fin(m, &data, &self.prep.stats, batch)?,
            });
        }
        Ok(rows)
    }

    fn add_fin_runs(&mut self, r: &mut ExperimentReport, h: HorizonSpec) -> Result<()> {
        let t = self.fins(h)?;
        r.training.extend(t.records.iter().map(|c| fin_run(c, h.ms())));
        if r.fin_params.is_none() {
            let m = &t.nets[0];
            r.fin_params = Some(ParamCount {
                per_tensor: m.param_report(),
                total: m.param_count(),
                reference_total: REFERENCE_FIN_PARAMS,
            });
        }
        Ok(())
    }

    /// Train the four imitation networks and report R² and MAP on the test split.
    pub fn exp1(&mut self) -> Result<ExperimentReport> {
        let h = self.cfg.horizon()?;
        let mut r = self.base_report(Experiment::Exp1Fin.name());
        self.add_fin_runs(&mut r, h)?;
        r.fin = self.evaluate_fins(h)?;
        Ok(self.finish(r))
    }

    fn train_new_cnn(&mut self, data: &[Labeled], init: u64, stream: u64) -> Result<(CnnModel<f64>, CnnRecord)> {
        self.audit.record(data.iter().map(|d| d.window));
        let mut rng = stream_rng(self.cfg.seed, "cnn-init", init);
        let mut m = CnnModel::new(self.cnn_arch(), &mut rng)?;
        let rec = train_cnn(&mut m, data, &self.cfg.cnn_train(), stream)?;
        Ok((m, rec))
    }

    /// Classifier trained on ground-truth features of the pre-training split at `h`.
    pub fn pretrained_cnn(&mut self, h: HorizonSpec) -> Result<&(CnnModel<f64>, CnnRecord)> {
        if !self.cnn_pre.contains_key(&h.ms()) {
            let ws = self.prep.windows.split(Split::Pretrain);
            let data = labeled(&self.prep.windows, &with_targets(&ws, ws.windows(), h), &self.prep.stats);
            let trained = self.train_new_cnn(&data, 2, 2)?;
            self.cnn_pre.insert(h.ms(), trained);
        }
        Ok(&self.cnn_pre[&h.ms()])
    }

    fn test_subjects(&self) -> Vec<u32> {
        self.prep.windows.split(Split::Test).subjects()
    }

    fn finetune_windows(&self, subject: u32, fraction: f64) -> Result<(Vec<Window>, Vec<String>)> {
        let ft = self.prep.windows.split(Split::Finetune).subject(subject);
        let (sub, warnings) = subsample_finetune(&ft, fraction, self.cfg.seed)?;
        let warnings = warnings.into_iter().map(|w| format!("subject {subject}: {w}")).collect();
        Ok((spread(sub.windows().to_vec(), self.cfg.joint_max_windows), warnings))
    }

    fn tune_cnn(&mut self, m: &mut CnnModel<f64>, data: &[Labeled], subject: u32) -> Result<CnnRecord> {
        self.audit.record(data.iter().map(|d| d.window));
        train_cnn(m, data, &self.cfg.tune_train(), 1000 + subject as u64)
    }

    /// Ground-truth classification: a classifier on pooled subjects (CNN-I) and one
    /// pre-trained, then tuned per subject (CNN-II).
    pub fn exp3(&mut self) -> Result<ExperimentReport> {
        let h = self.cfg.horizon()?;
        let fraction = self.cfg.finetune_fraction;
        let mut r = self.base_report(Experiment::Exp3Cnn.name());
        let ws = self.prep.windows.clone();
        let stats = self.prep.stats.clone();

        let pooled: Vec<Window> = ws.iter().copied().filter(|w| w.split != Split::Test).collect();
        let data = labeled(&ws, &with_targets(&ws, &pooled, h), &stats);
        let (mut cnn1, rec1) = self.train_new_cnn(&data, 1, 1)?;
        r.training.push(cnn_run(MODEL_CNN_I, &rec1, None, h.ms(), 1.0));
        let test_all = ws.split(Split::Test);
        let test = labeled(&ws, &with_targets(&ws, test_all.windows(), h), &stats);
        r.models.push(self.ground_truth_result(MODEL_CNN_I, &mut cnn1, &test, h, 1.0)?);

        let (pre, rec_pre) = self.pretrained_cnn(h)?.clone();
        r.training.push(cnn_run("CNN-pretrain", &rec_pre, None, h.ms(), 1.0));
        let mut per_subject = Vec::new();
        for s in self.test_subjects() {
            let (ft, warnings) = self.finetune_windows(s, fraction)?;
            r.warnings.extend(warnings);
            let data = labeled(&ws, &with_targets(&ws, &ft, h), &stats);
            let mut m = pre.clone();
            let rec = self.tune_cnn(&mut m, &data, s)?;
            r.training.push(cnn_run(MODEL_CNN_II, &rec, Some(s), h.ms(), fraction));
            let test_s: Vec<Labeled> = test.iter().filter(|l| l.window.subject_id == s).cloned().collect();
            per_subject.extend(self.ground_truth_result(MODEL_CNN_II, &mut m, &test_s, h, fraction)?.subjects);
        }
        r.models.push(ModelResult::new(MODEL_CNN_II, h.ms(), fraction, per_subject));
        Ok(self.finish(r))
    }

    fn ground_truth_result(&self, name: &str, m: &mut CnnModel<f64>, test: &[Labeled], h: HorizonSpec, fraction: f64) -> Result<ModelResult> {
        let feats: Vec<_> = test.iter().map(|l| &l.features).collect();
        let pred = predict_labels(m, &feats, 256)?;
        let windows: Vec<Window> = test.iter().map(|l| l.window).collect();
        let truth: Vec<u8> = test.iter().map(|l| l.label).collect();
        Ok(ModelResult::new(name, h.ms(), fraction, subject_accuracies(&windows, &truth, &pred)?))
    }

    /// Per-subject tuning at horizon `h` and fine-tuning fraction `fraction`: the classifier on
    /// ground-truth features, then the imitation networks and classifier fine-tuned jointly.
    /// Models are passed to `keep` as they are produced.
    pub fn finetune_subjects(
        &mut self,
        h: HorizonSpec,
        fraction: f64,
        report: &mut ExperimentReport,
        mut keep: impl FnMut(SubjectModels) -> Result<()>,
    ) -> Result<()> {
        let ws = self.prep.windows.clone();
        let stats = self.prep.stats.clone();
        self.add_fin_runs(report, h)?;
        let fins = self.fins(h)?.nets.clone();
        let (pre, rec_pre) = self.pretrained_cnn(h)?.clone();
        report.training.push(cnn_run("CNN-pretrain", &rec_pre, None, h.ms(), 1.0));
        let joint_cfg = self.cfg.joint_train();
        let batch = EVAL_WINDOWS_PER_BATCH;

        let (mut gt, mut joint, mut base) = (Vec::new(), Vec::new(), Vec::new());
        for s in self.test_subjects() {
            let (ft, warnings) = self.finetune_windows(s, fraction)?;
            report.warnings.extend(warnings);
            let ft_pairs = with_targets(&ws, &ft, h);
            let data = labeled(&ws, &ft_pairs, &stats);
            let mut cnn = pre.clone();
            let rec = self.tune_cnn(&mut cnn, &data, s)?;
            report.training.push(cnn_run(MODEL_CNN_II, &rec, Some(s), h.ms(), fraction));

            let test_s: Vec<Window> = ws.split(Split::Test).subject(s).windows().to_vec();
            let eval_pairs = spread(with_targets(&ws, &test_s, h), self.cfg.eval_max_windows);
            let eval_windows: Vec<Window> = eval_pairs.iter().map(|p| p.0).collect();
            let truth: Vec<u8> = eval_pairs.iter().map(|p| p.1.label).collect();
            let eval_gt = labeled(&ws, &eval_pairs, &stats);
            gt.extend(self.ground_truth_result(MODEL_CNN_II, &mut cnn, &eval_gt, h, fraction)?.subjects);

            let samples: Vec<JointSample> = ft_pairs
                .iter()
                .map(|(w, t)| JointSample { window: *w, label: t.label })
                .collect();
            self.audit.record(samples.iter().map(|d| d.window));
            let mut fins_s = fins.clone();
            let mut cnn_j = cnn.clone();
            let rec = finetune_joint(&mut fins_s, &mut cnn_j, &ws, &samples, &joint_cfg, s as u64)?;
            report.training.push(joint_run(MODEL_JOINT, &rec, s, h.ms(), fraction));
            let pred = joint_predict(&fins_s, &mut cnn_j, &ws, &eval_windows, batch)?;
            joint.extend(subject_accuracies(&eval_windows, &truth, &pred)?);

            if self.cfg.baseline_lstm {
                let mut rand_fins: FinSet<f64> = FeatureKind::ALL.map(|k| {
                    FinModel::new(k, &mut stream_rng(self.cfg.seed, "baseline-init", k.index() as u64))
                });
                let mut cnn_b = cnn.clone();
                let rec = finetune_joint(&mut rand_fins, &mut cnn_b, &ws, &samples, &joint_cfg, 10_000 + s as u64)?;
                report.training.push(joint_run(MODEL_BASELINE, &rec, s, h.ms(), fraction));
                let pred = joint_predict(&rand_fins, &mut cnn_b, &ws, &eval_windows, batch)?;
                base.extend(subject_accuracies(&eval_windows, &truth, &pred)?);
            }
            keep(SubjectModels {
                subject: s,
                cnn,
                fins: fins_s,
                joint_cnn: cnn_j,
            })?;
        }
        report.models.push(ModelResult::new(MODEL_CNN_II, h.ms(), fraction, gt));
        report.models.push(ModelResult::new(MODEL_JOINT, h.ms(), fraction, joint));
        if self.cfg.baseline_lstm {
            report.models.push(ModelResult::new(MODEL_BASELINE, h.ms(), fraction, base));
        }
        Ok(())
    }

    /// Joint fine-tuning at the configured horizon and fraction.
    pub fn exp4(&mut self) -> Result<ExperimentReport> {
        let h = self.cfg.horizon()?;
        let mut r = self.base_report(Experiment::Exp4Finetune.name());
        self.finetune_subjects(h, self.cfg.finetune_fraction, &mut r, |_| Ok(()))?;
        Ok(self.finish(r))
    }

    /// Repeat fine-tuning for every configured horizon; networks and classifiers are trained
    /// on targets shifted by each horizon.
    pub fn horizon_sweep(&mut self) -> Result<ExperimentReport> {
        let mut r = self.base_report(Experiment::Exp2Horizon.name());
        for &ms in &self.cfg.horizons.clone() {
            let h = HorizonSpec::new(ms)?;
            let mut part = self.base_report(Experiment::Exp2Horizon.name());
            self.finetune_subjects(h, self.cfg.finetune_fraction, &mut part, |_| Ok(()))?;
            r.fin.extend(self.evaluate_fins(h)?);
            for m in &part.models {
                r.add_curve("horizon", m);
            }
            r.fin_params = r.fin_params.or(part.fin_params);
            r.models.extend(part.models);
            r.training.extend(part.training);
            r.warnings.extend(part.warnings);
        }
        Ok(self.finish(r))
    }

    /// Repeat fine-tuning for every configured fraction at the configured horizon.
    pub fn fraction_sweep(&mut self) -> Result<ExperimentReport> {
        let h = self.cfg.horizon()?;
        let mut r = self.base_report("fraction-sweep");
        for &f in &self.cfg.fractions.clone() {
            let mut part = self.base_report("fraction-sweep");
            self.finetune_subjects(h, f, &mut part, |_| Ok(()))?;
            for m in &part.models {
                r.add_curve("fraction", m);
            }
            r.fin_params = r.fin_params.or(part.fin_params);
            r.models.extend(part.models);
            r.training.extend(part.training);
            r.warnings.extend(part.warnings);
        }
        Ok(self.finish(r))
    }

    /// Run the experiment named in the configuration.
    pub fn run(&mut self) -> Result<ExperimentReport> {
        match self.cfg.experiment {
            Experiment::Exp1Fin => self.exp1(),
            Experiment::Exp2Horizon => self.horizon_sweep(),
            Experiment::Exp3Cnn => self.exp3(),
            Experiment::Exp4Finetune => self.exp4(),
        }
    }

    /// Save the networks for `h` as `fin-<FEATURE>.ckpt` files.
    pub fn save_fins(&mut self, h: HorizonSpec, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stats = self.prep.stats.clone();
        let seed = self.cfg.seed;
        for m in &self.fins(h)?.nets {
            let mut ck = fin_checkpoint(m, &stats, seed);
            ck.meta.insert("horizon_ms".into(), h.ms().to_string());
            ck.save(&dir.join(fin_file_name(m.feature)))?;
        }
        Ok(())
    }

    /// Load `fin-<FEATURE>.ckpt` files for `h`; their feature statistics must match the data.
    pub fn load_fins(&mut self, h: HorizonSpec, dir: &Path) -> Result<()> {
        let (nets, stats) = load_fin_set(dir)?;
        if stats != self.prep.stats {
            return Err(Error::CheckpointMismatch {
                what: "feature statistics",
                expected: format!("{:?}", self.prep.stats),
                found: format!("{stats:?}"),
            });
        }
        self.set_fins(nets, h);
        Ok(())
    }

    /// Save the pre-trained classifier for `h`.
    pub fn save_pretrained_cnn(&mut self, h: HorizonSpec, path: &Path) -> Result<()> {
        let stats = self.prep.stats.clone();
        let seed = self.cfg.seed;
        let (m, rec) = self.pretrained_cnn(h)?;
        let mut ck = cnn_checkpoint(CheckpointKind::CnnII, m, &stats, seed);
        ck.meta.insert("horizon_ms".into(), h.ms().to_string());
        ck.meta.insert("epochs_run".into(), rec.epochs_run.to_string());
        ck.save(path)
    }

    /// Fine-tune at the configured horizon and fraction, writing one joint checkpoint per
    /// subject (`joint-s<id>.ckpt`) into `dir`.
    pub fn exp4_with_checkpoints(&mut self, dir: &Path) -> Result<ExperimentReport> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let h = self.cfg.horizon()?;
        let stats = self.prep.stats.clone();
        let seed = self.cfg.seed;
        let mut r = self.base_report(Experiment::Exp4Finetune.name());
        self.finetune_subjects(h, self.cfg.finetune_fraction, &mut r, |sm| {
            let mut ck = joint_checkpoint(&sm.fins, &sm.joint_cnn, &stats, seed);
            ck.meta.insert("horizon_ms".into(), h.ms().to_string());
            ck.meta.insert("subject".into(), sm.subject.to_string());
            ck.save(&dir.join(format!("joint-s{}.ckpt", sm.subject)))
        })?;
        Ok(self.finish(r))
    }

    /// Evaluate saved models on the test split: every `fin-*.ckpt` set in `dir` (imitation
    /// quality) and every `joint-s<id>.ckpt` (accuracy of that subject).
    pub fn evaluate_checkpoints(&mut self, dir: &Path) -> Result<ExperimentReport> {
        let h = self.cfg.horizon()?;
        let mut r = self.base_report("evaluate");
        if dir.join(fin_file_name(FeatureKind::Ent)).exists() {
            self.load_fins(h, dir)?;
            r.fin = self.evaluate_fins(h)?;
        }
        let ws = self.prep.windows.clone();
        let mut accs = Vec::new();
        for s in self.test_subjects() {
            let path = dir.join(format!("joint-s{s}.ckpt"));
            if !path.exists() {
                continue;
            }
            let ck = Checkpoint::load(&path)?;
            let mut fins: FinSet<f64> = FeatureKind::ALL.map(FinModel::zeros);
            let mut cnn = super::checkpoint::empty_cnn(&self.cnn_arch())?;
            let stats = restore_joint(&ck, &mut fins, &mut cnn)?;
            if stats != self.prep.stats {
                return Err(Error::CheckpointMismatch {
                    what: "feature statistics",
                    expected: format!("{:?}", self.prep.stats),
                    found: format!("{stats:?}"),
                });
            }
            let test_s: Vec<Window> = ws.split(Split::Test).subject(s).windows().to_vec();
            let pairs = spread(with_targets(&ws, &test_s, h), self.cfg.eval_max_windows);
            let windows: Vec<Window> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<u8> = pairs.iter().map(|p| p.1.label).collect();
            let pred = joint_predict(&fins, &mut cnn, &ws, &windows, EVAL_WINDOWS_PER_BATCH)?;
            accs.extend(subject_accuracies(&windows, &truth, &pred)?);
        }
        if !accs.is_empty() {
            r.models.push(ModelResult::new(MODEL_JOINT, h.ms(), self.cfg.finetune_fraction, accs));
        }
        if r.fin.is_empty() && r.models.is_empty() {
            return Err(Error::Checkpoint(format!("no checkpoints found in {}", dir.display())));
        }
        Ok(self.finish(r))
    }
}

fn cmp_window(a: &Window, b: &Window) -> std::cmp::Ordering {
    (a.recording, a.start_index).cmp(&(b.recording, b.start_index))
}
