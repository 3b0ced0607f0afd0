use serde::{Deserialize, Serialize};

use super::{NUM_CHANNELS, NUM_MOVEMENTS, NUM_REPETITIONS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// One subject's multichannel stream with per-sample movement and repetition labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub sample_rate: f64,
    /// Channel-major: `channels[c][t]`.
    pub channels: Vec<Vec<f64>>,
    /// 0 = rest, 1..=17 movement.
    pub stimulus: Vec<u8>,
    /// 0 = rest, 1..=6 repetition index.
    pub repetition: Vec<u8>,
}

impl Recording {
    pub fn new(subject_id: u32, channels: Vec<Vec<f64>>, stimulus: Vec<u8>, repetition: Vec<u8>) -> Result<Self> {
        let r = Recording {
            subject_id,
            sample_rate: SAMPLE_RATE_HZ,
            channels,
            stimulus,
            repetition,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != NUM_CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "recording has {} channels, expected {NUM_CHANNELS}",
                self.channels.len()
            )));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) || self.repetition.len() != n {
            return Err(Error::InvalidArgument("channel/label lengths differ".into()));
        }
        if let Some(t) = self.stimulus.iter().position(|&s| s as usize > NUM_MOVEMENTS) {
            return Err(Error::InvalidArgument(format!("stimulus out of range at sample {t}")));
        }
        if let Some(t) = self.repetition.iter().position(|&r| r > NUM_REPETITIONS) {
            return Err(Error::InvalidArgument(format!("repetition out of range at sample {t}")));
        }
        Ok(())
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.stimulus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimulus.is_empty()
    }
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Population mean and standard deviation of each channel.
    pub fn fit(r: &Recording) -> Result<Self> {
        if r.len() < 2 {
            return Err(Error::InvalidArgument("need at least two samples to fit channel statistics".into()));
        }
        let n = r.len() as f64;
        let mut mean = Vec::with_capacity(r.channels.len());
        let mut std = Vec::with_capacity(r.channels.len());
        for (c, ch) in r.channels.iter().enumerate() {
            let m = ch.iter().sum::<f64>() / n;
            let v = ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            if !(v > 0.0) {
                return Err(Error::ZeroVarianceChannel { channel: c });
            }
            mean.push(m);
            std.push(v.sqrt());
        }
        Ok(ChannelStats { mean, std })
    }
}

/// Z-score every channel. Statistics are fit on `r` unless supplied.
pub fn zscore_channels(r: &Recording, stats: Option<&ChannelStats>) -> Result<(Recording, ChannelStats)> {
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != r.channels.len() || s.std.len() != r.channels.len() {
                return Err(Error::dim("zscore_channels", "stats do not match channel count"));
            }
            if let Some(c) = s.std.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::ZeroVarianceChannel { channel: c });
            }
            s.clone()
        }
        None => ChannelStats::fit(r)?,
    };
    let channels = r
        .channels
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(ch, (&m, &s))| ch.iter().map(|&x| (x - m) / s).collect())
        .collect();
    Ok((
        Recording {
            channels,
            ..r.clone()
        },
        stats,
    ))
}
