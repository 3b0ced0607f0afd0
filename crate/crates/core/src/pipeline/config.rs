//! Flat `key = value` experiment configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{CnnTrainConfig, JointConfig};
use crate::dataset::SynthSpec;
use crate::error::{Error, Result};
use crate::fin::{FinTrainConfig, HorizonSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "exp1-fin")]
    Exp1Fin,
    #[serde(rename = "exp2-horizon")]
    Exp2Horizon,
    #[serde(rename = "exp3-cnn")]
    Exp3Cnn,
    #[serde(rename = "exp4-finetune")]
    Exp4Finetune,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1Fin => "exp1-fin",
            Experiment::Exp2Horizon => "exp2-horizon",
            Experiment::Exp3Cnn => "exp3-cnn",
            Experiment::Exp4Finetune => "exp4-finetune",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Experiment::Exp1Fin, Experiment::Exp2Horizon, Experiment::Exp3Cnn, Experiment::Exp4Finetune]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Everything that determines a run. Every training component draws its randomness from
/// `seed` through named sub-streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Directory of `subject_<id>.csv` files; synthetic data is generated when absent.
    pub data_dir: Option<PathBuf>,
    /// Subjects to generate, or to keep from `data_dir` (all when empty).
    pub subjects: Vec<u32>,
    pub synth_classes: usize,
    pub synth_reps: u8,
    pub synth_burst_ms: u32,
    pub synth_rest_ms: u32,
    pub synth_noise: f64,
    pub synth_texture: f64,
    pub horizon_ms: u32,
    pub finetune_fraction: f64,
    /// Horizons visited by the horizon sweep.
    pub horizons: Vec<u32>,
    /// Fractions visited by the fraction sweep.
    pub fractions: Vec<f64>,
    /// Keep every k-th window after segmentation.
    pub window_thin: usize,
    pub fin: FinTrainConfig,
    /// Cap on training pairs per network (0 = no cap).
    pub fin_max_pairs: usize,
    /// Cap on evaluation pairs per network (0 = no cap).
    pub fin_eval_max_pairs: usize,
    pub cnn: CnnTrainConfig,
    pub cnn_widths: [usize; 3],
    /// Per-subject classifier tuning.
    pub tune: CnnTrainConfig,
    pub joint: JointConfig,
    /// Cap on fine-tuning windows per subject (0 = no cap).
    pub joint_max_windows: usize,
    /// Cap on test windows per subject for chains that run the networks (0 = no cap).
    pub eval_max_windows: usize,
    /// Also fine-tune randomly initialized networks as a baseline.
    pub baseline_lstm: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Exp1Fin,
            seed: 42,
            data_dir: None,
            subjects: vec![1, 2, 26, 27],
            synth_classes: 5,
            synth_reps: 6,
            synth_burst_ms: 5000,
            synth_rest_ms: 3000,
            synth_noise: 0.05,
            synth_texture: 0.2,
            horizon_ms: 0,
            finetune_fraction: 1.0,
            horizons: vec![50, 100, 150, 200, 250, 300],
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            window_thin: 1,
            fin: FinTrainConfig::default(),
            fin_max_pairs: 0,
            fin_eval_max_pairs: 0,
            cnn: CnnTrainConfig::default(),
            cnn_widths: [32, 64, 128],
            tune: CnnTrainConfig::default(),
            joint: JointConfig::default(),
            joint_max_windows: 0,
            eval_max_windows: 0,
            baseline_lstm: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Parse `1-4,26,30-31` into a sorted, de-duplicated id list.
pub fn parse_subjects(s: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (parse::<u32>("subjects", a.trim())?, parse::<u32>("subjects", b.trim())?),
            None => {
                let v = parse::<u32>("subjects", part)?;
                (v, v)
            }
        };
        if a == 0 || b < a {
            return Err(Error::Config(format!("subjects: bad range {part:?}")));
        }
        out.extend(a..=b);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Inverse of [`parse_subjects`], compressing runs into ranges.
pub fn format_subjects(ids: &[u32]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < ids.len() {
        let mut j = i;
        while j + 1 < ids.len() && ids[j + 1] == ids[j] + 1 {
            j += 1;
        }
        parts.push(if i == j {
            ids[i].to_string()
        } else {
            format!("{}-{}", ids[i], ids[j])
        });
        i = j + 1;
    }
    parts.join(",")
}

impl ExperimentConfig {
    pub fn horizon(&self) -> Result<HorizonSpec> {
        HorizonSpec::new(self.horizon_ms)
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            subjects: self.subjects.clone(),
            n_classes: self.synth_classes,
            n_reps: self.synth_reps,
            seed: self.seed,
            burst_ms: self.synth_burst_ms,
            rest_ms: self.synth_rest_ms,
            noise: self.synth_noise,
            texture: self.synth_texture,
        }
    }

    /// Check invariants that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        HorizonSpec::new(self.horizon_ms).map_err(|e| Error::Config(e.to_string()))?;
        for &h in &self.horizons {
            HorizonSpec::new(h).map_err(|e| Error::Config(e.to_string()))?;
        }
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !frac_ok(self.finetune_fraction) || !self.fractions.iter().all(|&f| frac_ok(f)) {
            return Err(Error::Config("fractions must lie in (0, 1]".into()));
        }
        if self.window_thin == 0 {
            return Err(Error::Config("window_thin must be at least 1".into()));
        }
        if self.cnn_widths.contains(&0) {
            return Err(Error::Config("cnn.widths must be positive".into()));
        }
        if self.subjects.contains(&0) {
            return Err(Error::Config("subject ids start at 1".into()));
        }
        Ok(())
    }

    /// Set one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "experiment" => self.experiment = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "data_dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "subjects" => self.subjects = parse_subjects(v)?,
            "synth.classes" => self.synth_classes = parse(key, v)?,
            "synth.reps" => self.synth_reps = parse(key, v)?,
            "synth.burst_ms" => self.synth_burst_ms = parse(key, v)?,
            "synth.rest_ms" => self.synth_rest_ms = parse(key, v)?,
            "synth.noise" => self.synth_noise = parse(key, v)?,
            "synth.texture" => self.synth_texture = parse(key, v)?,
            "horizon_ms" => self.horizon_ms = parse(key, v)?,
            "finetune_fraction" => self.finetune_fraction = parse(key, v)?,
            "horizons" => self.horizons = parse_list(key, v)?,
            "fractions" => self.fractions = parse_list(key, v)?,
            "window_thin" => self.window_thin = parse(key, v)?,
            "fin.max_epochs" => self.fin.max_epochs = parse(key, v)?,
            "fin.patience" => self.fin.patience = parse(key, v)?,
            "fin.batch_size" => self.fin.batch_size = parse(key, v)?,
            "fin.val_fraction" => self.fin.val_fraction = parse(key, v)?,
            "fin.lr" => self.fin.lr = parse(key, v)?,
            "fin.weight_decay" => self.fin.weight_decay = parse(key, v)?,
            "fin.lr_decay" => self.fin.lr_decay = parse(key, v)?,
            "fin.clip_norm" => self.fin.clip_norm = parse(key, v)?,
            "fin.max_pairs" => self.fin_max_pairs = parse(key, v)?,
            "fin.eval_max_pairs" => self.fin_eval_max_pairs = parse(key, v)?,
            "cnn.max_epochs" => self.cnn.max_epochs = parse(key, v)?,
            "cnn.patience" => self.cnn.patience = parse(key, v)?,
            "cnn.batch_size" => self.cnn.batch_size = parse(key, v)?,
            "cnn.val_fraction" => self.cnn.val_fraction = parse(key, v)?,
            "cnn.lr" => self.cnn.lr = parse(key, v)?,
            "cnn.weight_decay" => self.cnn.weight_decay = parse(key, v)?,
            "cnn.noise_std" => {
                self.cnn.noise_std = parse(key, v)?;
                self.tune.noise_std = self.cnn.noise_std;
                self.joint.noise_std = self.cnn.noise_std;
            }
            "cnn.widths" => {
                let w: Vec<usize> = parse_list(key, v)?;
                self.cnn_widths = w
                    .try_into()
                    .map_err(|_| Error::Config("cnn.widths needs three values".into()))?;
            }
            "tune.max_epochs" => self.tune.max_epochs = parse(key, v)?,
            "tune.patience" => self.tune.patience = parse(key, v)?,
            "tune.batch_size" => self.tune.batch_size = parse(key, v)?,
            "tune.val_fraction" => self.tune.val_fraction = parse(key, v)?,
            "tune.lr" => self.tune.lr = parse(key, v)?,
            "joint.max_epochs" => self.joint.max_epochs = parse(key, v)?,
            "joint.patience" => self.joint.patience = parse(key, v)?,
            "joint.batch_windows" => self.joint.batch_windows = parse(key, v)?,
            "joint.val_fraction" => self.joint.val_fraction = parse(key, v)?,
            "joint.lr" => self.joint.lr = parse(key, v)?,
            "joint.weight_decay" => self.joint.weight_decay = parse(key, v)?,
            "joint.max_windows" => self.joint_max_windows = parse(key, v)?,
            "eval.max_windows" => self.eval_max_windows = parse(key, v)?,
            "baseline_lstm" => self.baseline_lstm = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// All keys in a fixed order. Feeding these back through [`ExperimentConfig::set`]
    /// reproduces the configuration.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let kv: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.name().to_string()),
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("subjects", format_subjects(&self.subjects)),
            ("synth.classes", self.synth_classes.to_string()),
            ("synth.reps", self.synth_reps.to_string()),
            ("synth.burst_ms", self.synth_burst_ms.to_string()),
            ("synth.rest_ms", self.synth_rest_ms.to_string()),
            ("synth.noise", self.synth_noise.to_string()),
            ("synth.texture", self.synth_texture.to_string()),
            ("horizon_ms", self.horizon_ms.to_string()),
            ("finetune_fraction", self.finetune_fraction.to_string()),
            ("horizons", join(&self.horizons)),
            ("fractions", join(&self.fractions)),
            ("window_thin", self.window_thin.to_string()),
            ("fin.max_epochs", self.fin.max_epochs.to_string()),
            ("fin.patience", self.fin.patience.to_string()),
            ("fin.batch_size", self.fin.batch_size.to_string()),
            ("fin.val_fraction", self.fin.val_fraction.to_string()),
            ("fin.lr", self.fin.lr.to_string()),
            ("fin.weight_decay", self.fin.weight_decay.to_string()),
            ("fin.lr_decay", self.fin.lr_decay.to_string()),
            ("fin.clip_norm", self.fin.clip_norm.to_string()),
            ("fin.max_pairs", self.fin_max_pairs.to_string()),
            ("fin.eval_max_pairs", self.fin_eval_max_pairs.to_string()),
            ("cnn.max_epochs", self.cnn.max_epochs.to_string()),
            ("cnn.patience", self.cnn.patience.to_string()),
            ("cnn.batch_size", self.cnn.batch_size.to_string()),
            ("cnn.val_fraction", self.cnn.val_fraction.to_string()),
            ("cnn.lr", self.cnn.lr.to_string()),
            ("cnn.weight_decay", self.cnn.weight_decay.to_string()),
            ("cnn.noise_std", self.cnn.noise_std.to_string()),
            ("cnn.widths", join(&self.cnn_widths)),
            ("tune.max_epochs", self.tune.max_epochs.to_string()),
            ("tune.patience", self.tune.patience.to_string()),
            ("tune.batch_size", self.tune.batch_size.to_string()),
            ("tune.val_fraction", self.tune.val_fraction.to_string()),
            ("tune.lr", self.tune.lr.to_string()),
            ("joint.max_epochs", self.joint.max_epochs.to_string()),
            ("joint.patience", self.joint.patience.to_string()),
            ("joint.batch_windows", self.joint.batch_windows.to_string()),
            ("joint.val_fraction", self.joint.val_fraction.to_string()),
            ("joint.lr", self.joint.lr.to_string()),
            ("joint.weight_decay", self.joint.weight_decay.to_string()),
            ("joint.max_windows", self.joint_max_windows.to_string()),
            ("eval.max_windows", self.eval_max_windows.to_string()),
            ("baseline_lstm", self.baseline_lstm.to_string()),
        ];
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Training configurations with the root seed filled in.
    pub fn fin_train(&self) -> FinTrainConfig {
        FinTrainConfig {
            seed: self.seed,
            ..self.fin.clone()
        }
    }

    pub fn cnn_train(&self) -> CnnTrainConfig {
        CnnTrainConfig {
            seed: self.seed,
            ..self.cnn.clone()
        }
    }

    pub fn tune_train(&self) -> CnnTrainConfig {
        CnnTrainConfig {
            seed: self.seed ^ 0x7475_6e65,
            weight_decay: self.cnn.weight_decay,
            ..self.tune.clone()
        }
    }

    pub fn joint_train(&self) -> JointConfig {
        JointConfig {
            seed: self.seed,
            ..self.joint.clone()
        }
    }
}
