use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::augment::augment_batch;
use super::cnn::CnnModel;
use crate::dataset::{subject_group, SubjectGroup, Window};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::Mode;
use crate::scalar::Real;
use crate::seeds::stream_rng;

/// Eval-mode class labels (1-based). Replica rows are left noise-free at inference.
pub fn predict_labels<T: Real>(m: &mut CnnModel<T>, feats: &[&FeatureMatrix], batch: usize) -> Result<Vec<u8>> {
    let mut rng = stream_rng(0, "cnn-eval", 0);
    let mut out = Vec::with_capacity(feats.len());
    for chunk in feats.chunks(batch.max(1)) {
        let x = augment_batch::<T, _>(chunk, 0.0, &mut rng);
        let (logits, _) = m.forward(&x, Mode::Eval, &mut rng)?;
        out.extend(logits.argmax_rows().into_iter().map(|k| k as u8 + 1));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectAccuracy {
    pub subject: u32,
    pub group: SubjectGroup,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Mean and population standard deviation of per-subject accuracy within a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    /// `within`, `cross` or `all`.
    pub group: String,
    pub subjects: usize,
    pub mean: f64,
    pub std: f64,
}

/// Accuracy per subject, in ascending subject order.
pub fn subject_accuracies(windows: &[Window], truth: &[u8], pred: &[u8]) -> Result<Vec<SubjectAccuracy>> {
    if windows.len() != truth.len() || truth.len() != pred.len() {
        return Err(Error::dim(
            "subject_accuracies",
            format!("{} windows, {} labels, {} predictions", windows.len(), truth.len(), pred.len()),
        ));
    }
    let mut tally: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for ((w, t), p) in windows.iter().zip(truth).zip(pred) {
        let e = tally.entry(w.subject_id).or_default();
        e.0 += (t == p) as usize;
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(subject, (correct, total))| SubjectAccuracy {
            subject,
            group: subject_group(subject),
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
        .collect())
}

/// Subject-weighted summaries for `within`, `cross` and `all`; empty groups are omitted.
pub fn summarize_groups(per_subject: &[SubjectAccuracy]) -> Vec<GroupAccuracy> {
    let groups: [(&str, Option<SubjectGroup>); 3] = [
        ("within", Some(SubjectGroup::Within)),
        ("cross", Some(SubjectGroup::Cross)),
        ("all", None),
    ];
    groups
        .iter()
        .filter_map(|&(name, g)| {
            let acc: Vec<f64> = per_subject
                .iter()
                .filter(|s| g.is_none_or(|g| s.group == g))
                .map(|s| s.accuracy)
                .collect();
            if acc.is_empty() {
                return None;
            }
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let std = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            Some(GroupAccuracy {
                group: name.to_string(),
                subjects: acc.len(),
                mean,
                std,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn win(subject: u32) -> Window {
        Window {
            recording: 0,
            subject_id: subject,
            start_index: 0,
            label: 1,
            repetition: 2,
            split: Split::Test,
        }
    }

    #[test]
    fn perfect_predictor() {
        let w = vec![win(1), win(1), win(30)];
        let t = vec![3, 4, 5];
        let s = subject_accuracies(&w, &t, &t).unwrap();
        assert!(s.iter().all(|s| s.accuracy == 1.0));
        let g = summarize_groups(&s);
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|g| g.mean == 1.0 && g.std == 0.0));
    }

    #[test]
    fn subject_weighted_grouping() {
        let w = vec![win(1), win(1), win(1), win(1), win(2), win(27)];
        let t = vec![1, 1, 1, 1, 1, 1];
        let p = vec![1, 1, 1, 2, 2, 1];
        let s = subject_accuracies(&w, &t, &p).unwrap();
        assert_eq!(s.iter().map(|s| s.accuracy).collect::<Vec<_>>(), vec![0.75, 0.0, 1.0]);
        let g = summarize_groups(&s);
        let within = g.iter().find(|g| g.group == "within").unwrap();
        assert!((within.mean - 0.375).abs() < 1e-15);
        assert!((within.std - 0.375).abs() < 1e-15);
        let all = g.iter().find(|g| g.group == "all").unwrap();
        assert!((all.mean - 1.75 / 3.0).abs() < 1e-15);
        assert!(subject_accuracies(&w, &t, &p[..2]).is_err());
    }

    #[test]
    fn uniform_random_predictor_is_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let w = vec![win(5); n];
        let t: Vec<u8> = (0..n).map(|_| rng.random_range(1..=17)).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.random_range(1..=17)).collect();
        let acc = subject_accuracies(&w, &t, &p).unwrap()[0].accuracy;
        assert!((acc - 1.0 / 17.0).abs() < 0.005, "{acc}");
    }
}
