//! Experiment reports: JSON and long-form CSV with deterministic ordering, plus a timing
//! sidecar kept apart so that reports stay byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{summarize_groups, GroupAccuracy, SubjectAccuracy};
use crate::error::{Error, Result};
use crate::fin::FinEval;

/// Parameter count of the imitation network reported for the original model.
pub const REFERENCE_FIN_PARAMS: usize = 22_508;

/// Metrics emitted per subject in the CSV form.
pub const SUBJECT_METRICS: [&str; 3] = ["accuracy", "correct", "total"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub subjects: Vec<u32>,
    pub pretrain_windows: usize,
    pub finetune_windows: usize,
    pub test_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub per_tensor: Vec<(String, usize)>,
    pub total: usize,
    pub reference_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinRow {
    pub horizon_ms: u32,
    pub eval: FinEval,
}

/// Per-subject accuracy of one model configuration, with group summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    pub horizon_ms: u32,
    pub fraction: f64,
    pub subjects: Vec<SubjectAccuracy>,
    pub groups: Vec<GroupAccuracy>,
}

impl ModelResult {
    pub fn new(model: impl Into<String>, horizon_ms: u32, fraction: f64, mut subjects: Vec<SubjectAccuracy>) -> Self {
        subjects.sort_by_key(|s| s.subject);
        let groups = summarize_groups(&subjects);
        ModelResult {
            model: model.into(),
            horizon_ms,
            fraction,
            subjects,
            groups,
        }
    }

    pub fn group(&self, name: &str) -> Option<&GroupAccuracy> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// One training run. `seconds_per_epoch` goes to the timing sidecar only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub name: String,
    pub subject: Option<u32>,
    pub horizon_ms: u32,
    pub fraction: f64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs_run: usize,
    /// Epoch (1-based) whose weights were kept.
    pub epochs_to_converge: usize,
    pub final_train_loss: f64,
    /// Mean training loss of every epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss (imitation networks) or accuracy (classifiers) of every epoch.
    pub val_metric: Vec<f64>,
    #[serde(skip)]
    pub seconds_per_epoch: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sweep: String,
    pub model: String,
    pub horizon_ms: u32,
    pub horizon_samples: usize,
    pub fraction: f64,
    pub group: String,
    pub subjects: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub data: DataSummary,
    pub fin_params: Option<ParamCount>,
    pub fin: Vec<FinRow>,
    pub models: Vec<ModelResult>,
    pub training: Vec<TrainingRun>,
    pub curves: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    name: &'a str,
    subject: Option<u32>,
    horizon_ms: u32,
    fraction: f64,
    seconds_per_epoch: &'a [f64],
    mean_seconds_per_epoch: f64,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".into()
    }
}

impl ExperimentReport {
    pub fn model(&self, name: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Append the group means of every model as curve points of `sweep`.
    pub fn add_curve(&mut self, sweep: &str, m: &ModelResult) {
        for g in &m.groups {
            self.curves.push(CurvePoint {
                sweep: sweep.to_string(),
                model: m.model.clone(),
                horizon_ms: m.horizon_ms,
                horizon_samples: crate::dataset::ms_to_samples(m.horizon_ms),
                fraction: m.fraction,
                group: g.group.clone(),
                subjects: g.subjects,
                mean: g.mean,
                std: g.std,
            });
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Long-form rows: `record,model,horizon_ms,fraction,subject,group,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,model,horizon_ms,fraction,subject,group,metric,value\n");
        let mut row = |rec: &str, model: &str, h: u32, f: f64, subject: Option<u32>, group: &str, metric: &str, v: f64| {
            let subject = subject.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{rec},{model},{h},{f},{subject},{group},{metric},{}", num(v));
        };
        for r in &self.fin {
            let e = &r.eval;
            let model = format!("FIN-{}", e.feature);
            for (metric, v) in [
                ("r2", e.r2),
                ("map", e.map),
                ("r2_window_mean", e.r2_window_mean),
                ("r2_window_std", e.r2_window_std),
                ("map_window_mean", e.map_window_mean),
                ("map_window_std", e.map_window_std),
                ("pairs", e.pairs as f64),
            ] {
                row("fin", &model, r.horizon_ms, 1.0, None, "", metric, v);
            }
        }
        for m in &self.models {
            for s in &m.subjects {
                let vals = [s.accuracy, s.correct as f64, s.total as f64];
                for (metric, v) in SUBJECT_METRICS.iter().zip(vals) {
                    row("subject", &m.model, m.horizon_ms, m.fraction, Some(s.subject), s.group.as_str(), metric, v);
                }
            }
            for g in &m.groups {
                row("group", &m.model, m.horizon_ms, m.fraction, None, &g.group, "mean", g.mean);
                row("group", &m.model, m.horizon_ms, m.fraction, None, &g.group, "std", g.std);
                row("group", &m.model, m.horizon_ms, m.fraction, None, &g.group, "subjects", g.subjects as f64);
            }
        }
        for t in &self.training {
            row("training", &t.name, t.horizon_ms, t.fraction, t.subject, "", "epochs_run", t.epochs_run as f64);
            row("training", &t.name, t.horizon_ms, t.fraction, t.subject, "", "epochs_to_converge", t.epochs_to_converge as f64);
        }
        for c in &self.curves {
            row(&format!("curve-{}", c.sweep), &c.model, c.horizon_ms, c.fraction, None, &c.group, "horizon_samples", c.horizon_samples as f64);
            row(&format!("curve-{}", c.sweep), &c.model, c.horizon_ms, c.fraction, None, &c.group, "mean", c.mean);
            row(&format!("curve-{}", c.sweep), &c.model, c.horizon_ms, c.fraction, None, &c.group, "std", c.std);
        }
        out
    }

    pub fn timing_json(&self) -> Result<String> {
        let rows: Vec<TimingRow> = self
            .training
            .iter()
            .map(|t| TimingRow {
                name: &t.name,
                subject: t.subject,
                horizon_ms: t.horizon_ms,
                fraction: t.fraction,
                seconds_per_epoch: &t.seconds_per_epoch,
                mean_seconds_per_epoch: if t.seconds_per_epoch.is_empty() {
                    0.0
                } else {
                    t.seconds_per_epoch.iter().sum::<f64>() / t.seconds_per_epoch.len() as f64
                },
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows)?;
        s.push('\n');
        Ok(s)
    }

    /// Write `<stem>.json`, `<stem>.csv` and `<stem>.timing.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        put(format!("{stem}.json"), self.to_json()?)?;
        put(format!("{stem}.csv"), self.to_csv())?;
        put(format!("{stem}.timing.json"), self.timing_json()?)
    }

    /// Recompute every group summary from the per-subject rows.
    pub fn check_groups(&self, tol: f64) -> Result<()> {
        for m in &self.models {
            let again = summarize_groups(&m.subjects);
            if again.len() != m.groups.len() {
                return Err(Error::Internal(format!("{}: group count changed", m.model)));
            }
            for (a, b) in again.iter().zip(&m.groups) {
                if a.group != b.group
                    || a.subjects != b.subjects
                    || (a.mean - b.mean).abs() > tol
                    || (a.std - b.std).abs() > tol
                {
                    return Err(Error::Internal(format!("{}: group {} does not match its subjects", m.model, b.group)));
                }
            }
        }
        Ok(())
    }
}
