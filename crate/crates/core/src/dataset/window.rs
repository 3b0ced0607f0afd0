use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;

use super::{assign_split, subject_group, Recording, Split, SubjectGroup, NUM_CHANNELS, WINDOW_LEN, WINDOW_STRIDE};
use crate::error::{Error, Result};
use crate::seeds::stream_rng;

/// A labelled 600-sample window. Samples live in the owning [`WindowSet`]'s recordings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    /// Index into [`WindowSet::recordings`].
    pub recording: usize,
    pub subject_id: u32,
    pub start_index: usize,
    pub label: u8,
    pub repetition: u8,
    pub split: Split,
}

impl Window {
    pub fn group(&self) -> SubjectGroup {
        subject_group(self.subject_id)
    }
}

/// Number of window positions in a recording of `n` samples, before label filtering.
pub fn window_positions(n: usize) -> usize {
    if n < WINDOW_LEN {
        0
    } else {
        (n - WINDOW_LEN) / WINDOW_STRIDE + 1
    }
}

fn majority(values: &[u8]) -> (u8, usize) {
    let mut counts = [0usize; 256];
    for &v in values {
        counts[v as usize] += 1;
    }
    let mut best = (0u8, 0usize);
    for (v, &c) in counts.iter().enumerate() {
        if c > best.1 {
            best = (v as u8, c);
        }
    }
    best
}

/// Label and repetition of the window starting at `start`, or `None` when it is dropped.
pub(crate) fn label_window(r: &Recording, start: usize) -> Option<(u8, u8)> {
    if start + WINDOW_LEN > r.len() {
        return None;
    }
    let (label, count) = majority(&r.stimulus[start..start + WINDOW_LEN]);
    if label == 0 || 2 * count < WINDOW_LEN {
        return None;
    }
    let reps: Vec<u8> = r.repetition[start..start + WINDOW_LEN]
        .iter()
        .copied()
        .filter(|&x| x != 0)
        .collect();
    let (rep, _) = majority(&reps);
    (rep != 0).then_some((label, rep))
}

/// Immutable set of windows over a shared pool of recordings.
#[derive(Clone, Debug)]
pub struct WindowSet {
    recordings: Arc<Vec<Recording>>,
    windows: Vec<Window>,
}

impl WindowSet {
    /// Segment every recording. Recordings are expected to be normalized already.
    pub fn from_recordings(recordings: Vec<Recording>) -> Result<Self> {
        let mut windows = Vec::new();
        for (ri, r) in recordings.iter().enumerate() {
            for k in 0..window_positions(r.len()) {
                let start = k * WINDOW_STRIDE;
                if let Some((label, repetition)) = label_window(r, start) {
                    windows.push(Window {
                        recording: ri,
                        subject_id: r.subject_id,
                        start_index: start,
                        label,
                        repetition,
                        split: assign_split(r.subject_id, repetition)?,
                    });
                }
            }
        }
        Ok(WindowSet {
            recordings: Arc::new(recordings),
            windows,
        })
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Window> {
        self.windows.iter()
    }

    /// The 600 samples of channel `c` for window `w`.
    pub fn channel(&self, w: &Window, c: usize) -> &[f64] {
        &self.recordings[w.recording].channels[c][w.start_index..w.start_index + WINDOW_LEN]
    }

    /// Window samples as a row-major 600×12 matrix.
    pub fn samples(&self, w: &Window) -> Vec<f64> {
        let mut out = vec![0.0; WINDOW_LEN * NUM_CHANNELS];
        for c in 0..NUM_CHANNELS {
            for (t, &v) in self.channel(w, c).iter().enumerate() {
                out[t * NUM_CHANNELS + c] = v;
            }
        }
        out
    }

    /// The labelled window `offset` samples after `w` in the same recording, if it exists.
    pub fn window_after(&self, w: &Window, offset: usize) -> Option<Window> {
        let r = &self.recordings[w.recording];
        let start = w.start_index + offset;
        let (label, repetition) = label_window(r, start)?;
        Some(Window {
            start_index: start,
            label,
            repetition,
            split: assign_split(w.subject_id, repetition).ok()?,
            ..*w
        })
    }

    pub fn with_windows(&self, windows: Vec<Window>) -> WindowSet {
        WindowSet {
            recordings: Arc::clone(&self.recordings),
            windows,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Window) -> bool) -> WindowSet {
        self.with_windows(self.windows.iter().copied().filter(|w| keep(w)).collect())
    }

    pub fn split(&self, s: Split) -> WindowSet {
        self.filter(|w| w.split == s)
    }

    pub fn subject(&self, id: u32) -> WindowSet {
        self.filter(|w| w.subject_id == id)
    }

    /// Keep every `every`-th window (the first is always kept).
    pub fn thin(&self, every: usize) -> WindowSet {
        let every = every.max(1);
        self.with_windows(self.windows.iter().copied().step_by(every).collect())
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.windows.iter().map(|w| w.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct labels in ascending order.
    pub fn labels(&self) -> Vec<u8> {
        let mut l: Vec<u8> = self.windows.iter().map(|w| w.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Segment one recording.
pub fn slide_windows(r: Recording) -> Result<WindowSet> {
    WindowSet::from_recordings(vec![r])
}

/// Stratified subset keeping `round(fraction * n_c)` windows of every class `c`.
///
/// Returns the subset in original order plus one warning per class that ends up empty.
pub fn subsample_finetune(ws: &WindowSet, fraction: f64, seed: u64) -> Result<(WindowSet, Vec<String>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    if let Some(w) = ws.iter().find(|w| w.split != Split::Finetune) {
        return Err(Error::InvalidArgument(format!(
            "subsampling applies to finetune windows; found a {} window",
            w.split.as_str()
        )));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, w) in ws.iter().enumerate() {
        by_class.entry(w.label).or_default().push(i);
    }
    let mut rng = stream_rng(seed, "subsample-finetune", 0);
    let mut keep = Vec::new();
    let mut warnings = Vec::new();
    for (label, mut idx) in by_class {
        let take = (fraction * idx.len() as f64).round() as usize;
        if take == 0 {
            warnings.push(format!(
                "fraction {fraction} leaves class {label} with no finetune windows ({} available)",
                idx.len()
            ));
        }
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..take]);
    }
    keep.sort_unstable();
    let windows = keep.into_iter().map(|i| ws.windows[i]).collect();
    Ok((ws.with_windows(windows), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stimulus: Vec<u8>, repetition: Vec<u8>, subject: u32) -> Recording {
        let n = stimulus.len();
        let channels = (0..NUM_CHANNELS)
            .map(|c| (0..n).map(|t| (t * (c + 1)) as f64).collect())
            .collect();
        Recording::new(subject, channels, stimulus, repetition).unwrap()
    }

    fn moving(n: usize) -> Recording {
        rec(vec![4; n], vec![1; n], 1)
    }

    #[test]
    fn counts_follow_the_stride_formula() {
        assert_eq!(slide_windows(moving(600)).unwrap().len(), 1);
        assert_eq!(slide_windows(moving(660)).unwrap().len(), 4);
        assert_eq!(slide_windows(moving(599)).unwrap().len(), 0);
        assert_eq!(window_positions(660), 4);
        let starts: Vec<usize> = slide_windows(moving(700)).unwrap().iter().map(|w| w.start_index).collect();
        assert_eq!(starts, vec![0, 20, 40, 60, 80, 100]);
    }

    #[test]
    fn rest_is_dropped() {
        assert!(slide_windows(rec(vec![0; 2000], vec![0; 2000], 1)).unwrap().is_empty());
    }

    #[test]
    fn majority_and_purity() {
        // 300 rest + 300 movement: a tie resolves to the lower value, i.e. rest.
        let mut s = vec![0u8; 300];
        s.extend(vec![5u8; 300]);
        let mut r = vec![0u8; 300];
        r.extend(vec![2u8; 300]);
        assert!(slide_windows(rec(s.clone(), r.clone(), 3)).unwrap().is_empty());

        // 301 movement samples win with label 5, repetition 2, test split.
        s[299] = 5;
        r[299] = 2;
        let ws = slide_windows(rec(s, r, 3)).unwrap();
        assert_eq!(ws.len(), 1);
        let w = ws.windows()[0];
        assert_eq!((w.label, w.repetition, w.split), (5, 2, Split::Test));

        // Three movements at 200 samples each: no label reaches half the window.
        let s: Vec<u8> = (0..600).map(|t| 1 + (t / 200) as u8).collect();
        assert!(slide_windows(rec(s, vec![1; 600], 1)).unwrap().is_empty());
    }

    #[test]
    fn views_match_the_recording() {
        let ws = slide_windows(moving(700)).unwrap();
        let w = ws.windows()[2];
        assert_eq!(ws.channel(&w, 3)[0], (40 * 4) as f64);
        let m = ws.samples(&w);
        assert_eq!(m.len(), 600 * 12);
        assert_eq!(m[5 * 12 + 3], (45 * 4) as f64);
    }

    #[test]
    fn window_after_tracks_offsets_and_labels() {
        let mut s = vec![2u8; 1500];
        s[1000..].fill(0);
        let ws = slide_windows(rec(s, vec![1; 1500], 1)).unwrap();
        let w = ws.windows()[0];
        assert_eq!(ws.window_after(&w, 600).unwrap().start_index, 600);
        assert!(ws.window_after(&w, 900).is_none());
        assert!(ws.window_after(&w, 1000).is_none());
    }

    fn finetune_two_class(n_each: usize) -> WindowSet {
        let n = WINDOW_LEN + WINDOW_STRIDE * (2 * n_each - 1);
        // Two long segments so each class gets exactly n_each windows.
        let ws = slide_windows(rec(vec![1; n], vec![6; n], 30)).unwrap();
        let windows = ws
            .iter()
            .enumerate()
            .map(|(i, w)| Window {
                label: if i < n_each { 1 } else { 2 },
                ..*w
            })
            .collect();
        ws.with_windows(windows)
    }

    #[test]
    fn stratified_subsampling() {
        let ws = finetune_two_class(50);
        assert_eq!(ws.len(), 100);
        let (half, warn) = subsample_finetune(&ws, 0.5, 9).unwrap();
        assert!(warn.is_empty());
        assert_eq!(half.iter().filter(|w| w.label == 1).count(), 25);
        assert_eq!(half.iter().filter(|w| w.label == 2).count(), 25);
        let (again, _) = subsample_finetune(&ws, 0.5, 9).unwrap();
        assert_eq!(half.windows(), again.windows());
        let (other, _) = subsample_finetune(&ws, 0.5, 10).unwrap();
        assert_ne!(half.windows(), other.windows());
        let (all, _) = subsample_finetune(&ws, 1.0, 1).unwrap();
        assert_eq!(all.windows(), ws.windows());
    }

    #[test]
    fn tiny_fraction_warns() {
        let (sub, warn) = subsample_finetune(&finetune_two_class(5), 0.05, 1).unwrap();
        assert!(sub.is_empty());
        assert_eq!(warn.len(), 2);
        assert!(subsample_finetune(&finetune_two_class(5), 0.0, 1).is_err());
    }

    #[test]
    fn subsampling_rejects_other_splits() {
        assert!(subsample_finetune(&slide_windows(moving(700)).unwrap(), 0.5, 1).is_err());
    }
}
