//! Closed-form temporal features (ENT, RMS, VAR, SSI) and their z-score normalization.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Window, WindowSet, NUM_CHANNELS};
use crate::error::{Error, Result};

/// Histogram bins used by [`entropy`].
pub const ENTROPY_BINS: usize = 100;
pub const NUM_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "ENT")]
    Ent,
    #[serde(rename = "RMS")]
    Rms,
    #[serde(rename = "VAR")]
    Var,
    #[serde(rename = "SSI")]
    Ssi,
}

impl FeatureKind {
    /// Row order of a [`FeatureMatrix`].
    pub const ALL: [FeatureKind; NUM_FEATURES] = [FeatureKind::Ent, FeatureKind::Rms, FeatureKind::Var, FeatureKind::Ssi];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Ent => "ENT",
            FeatureKind::Rms => "RMS",
            FeatureKind::Var => "VAR",
            FeatureKind::Ssi => "SSI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {s:?} (expected ENT, RMS, VAR or SSI)")))
    }

    /// Raw feature value of one channel sequence.
    pub fn compute(self, x: &[f64]) -> f64 {
        match self {
            FeatureKind::Ent => entropy(x, ENTROPY_BINS),
            FeatureKind::Rms => rms(x),
            FeatureKind::Var => variance(x),
            FeatureKind::Ssi => ssi(x),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn rms(x: &[f64]) -> f64 {
    (ssi(x) / x.len() as f64).sqrt()
}

/// Sample variance with the `N - 1` denominator; 0 for fewer than two samples.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

pub fn ssi(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Shannon entropy (nats) of a `bins`-bin histogram spanning `[min(x), max(x)]`.
///
/// A constant signal has entropy 0.
pub fn entropy(x: &[f64], bins: usize) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x.is_empty() || bins == 0 || hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    let scale = bins as f64 / (hi - lo);
    for &v in x {
        let b = (((v - lo) * scale) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = x.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Per-window feature values: rows follow [`FeatureKind::ALL`], columns are channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: [[f64; NUM_CHANNELS]; NUM_FEATURES],
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn zeros(normalized: bool) -> Self {
        FeatureMatrix {
            values: [[0.0; NUM_CHANNELS]; NUM_FEATURES],
            normalized,
        }
    }

    pub fn get(&self, kind: FeatureKind, channel: usize) -> f64 {
        self.values[kind.index()][channel]
    }

    pub fn row(&self, kind: FeatureKind) -> &[f64; NUM_CHANNELS] {
        &self.values[kind.index()]
    }

    /// Raw features of a set of channel sequences.
    pub fn from_channels(channels: &[&[f64]]) -> Self {
        assert_eq!(channels.len(), NUM_CHANNELS, "a window has 12 channels");
        let mut m = FeatureMatrix::zeros(false);
        for kind in FeatureKind::ALL {
            for (c, x) in channels.iter().enumerate() {
                m.values[kind.index()][c] = kind.compute(x);
            }
        }
        m
    }
}

/// Raw feature matrix of one window.
pub fn extract(ws: &WindowSet, w: &Window) -> FeatureMatrix {
    let chans: Vec<&[f64]> = (0..NUM_CHANNELS).map(|c| ws.channel(w, c)).collect();
    FeatureMatrix::from_channels(&chans)
}

/// Raw feature matrices of every window in the set.
pub fn extract_all(ws: &WindowSet) -> Vec<FeatureMatrix> {
    ws.iter().map(|w| extract(ws, w)).collect()
}

/// Per-feature-type mean and standard deviation, pooled over channels and windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

impl FeatureStats {
    pub fn fit<'a>(ms: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; NUM_FEATURES];
        let mut sq = [0.0; NUM_FEATURES];
        let ms: Vec<&FeatureMatrix> = ms.into_iter().collect();
        if ms.iter().any(|m| m.normalized) {
            return Err(Error::InvalidArgument("feature statistics must be fit on raw features".into()));
        }
        for m in &ms {
            n += NUM_CHANNELS;
            for f in 0..NUM_FEATURES {
                sum[f] += m.values[f].iter().sum::<f64>();
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit feature statistics on an empty set".into()));
        }
        let mean = sum.map(|s| s / n as f64);
        for m in &ms {
            for f in 0..NUM_FEATURES {
                sq[f] += m.values[f].iter().map(|v| (v - mean[f]).powi(2)).sum::<f64>();
            }
        }
        let mut std = [0.0; NUM_FEATURES];
        for f in 0..NUM_FEATURES {
            std[f] = (sq[f] / n as f64).sqrt();
            if !(std[f] > 0.0) {
                return Err(Error::ZeroVarianceFeature {
                    feature: FeatureKind::ALL[f].name(),
                });
            }
        }
        Ok(FeatureStats { mean, std })
    }

    pub fn normalize(&self, kind: FeatureKind, raw: f64) -> f64 {
        (raw - self.mean[kind.index()]) / self.std[kind.index()]
    }

    pub fn denormalize(&self, kind: FeatureKind, z: f64) -> f64 {
        z * self.std[kind.index()] + self.mean[kind.index()]
    }

    /// Z-score every entry. This is a pure affine map; it does not check the `normalized` flag.
    pub fn apply(&self, m: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(true);
        for kind in FeatureKind::ALL {
            for c in 0..NUM_CHANNELS {
                out.values[kind.index()][c] = self.normalize(kind, m.get(kind, c));
            }
        }
        out
    }

    /// Inverse of [`FeatureStats::apply`].
    pub fn invert(&self, m: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(false);
        for kind in FeatureKind::ALL {
            for c in 0..NUM_CHANNELS {
                out.values[kind.index()][c] = self.denormalize(kind, m.get(kind, c));
            }
        }
        out
    }
}

/// Write `subject,repetition,start_index,label,feature,ch1..ch12` rows, four per window.
pub fn write_feature_dump(path: &Path, windows: &[Window], ms: &[FeatureMatrix]) -> Result<()> {
    if windows.len() != ms.len() {
        return Err(Error::dim("write_feature_dump", format!("{} windows, {} matrices", windows.len(), ms.len())));
    }
    let mut out = String::from("subject,repetition,start_index,label,feature");
    for c in 1..=NUM_CHANNELS {
        let _ = write!(out, ",ch{c}");
    }
    out.push('\n');
    for (w, m) in windows.iter().zip(ms) {
        for kind in FeatureKind::ALL {
            let _ = write!(out, "{},{},{},{},{}", w.subject_id, w.repetition, w.start_index, w.label, kind);
            for v in m.row(kind) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
