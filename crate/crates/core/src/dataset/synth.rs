//! Deterministic synthetic recordings: movement bursts with class-specific channel signatures.
//!
//! Each (class, channel) pair has an amplitude, a carrier frequency and a waveform shape
//! exponent. A burst on channel `c` for class `k` is
//! `g_c · a_kc · env(t) · (sgn(s)|s|^p_kc + β·n(t)) + σ·ε(t)` with `s` a sinusoid at the
//! carrier frequency, `n` unit-variance AR(1) noise and `g_c` a per-subject gain. Rest is
//! `σ·ε(t)` alone.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ms_to_samples, Recording, NUM_CHANNELS, NUM_MOVEMENTS, NUM_REPETITIONS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::seeds::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects: Vec<u32>,
    pub n_classes: usize,
    pub n_reps: u8,
    pub seed: u64,
    pub burst_ms: u32,
    pub rest_ms: u32,
    /// Standard deviation of the additive sensor noise.
    pub noise: f64,
    /// Weight of the band-limited noise component inside a burst.
    pub texture: f64,
}

impl SynthSpec {
    /// Subjects `1..=n_subjects` with 5 s bursts and 3 s rests.
    pub fn new(n_subjects: u32, n_classes: usize, n_reps: u8, seed: u64) -> Self {
        SynthSpec {
            subjects: (1..=n_subjects).collect(),
            n_classes,
            n_reps,
            seed,
            burst_ms: 5000,
            rest_ms: 3000,
            noise: 0.05,
            texture: 0.2,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=NUM_MOVEMENTS).contains(&self.n_classes) {
            return Err(Error::InvalidArgument(format!("n_classes {} outside 2..=17", self.n_classes)));
        }
        if !(1..=NUM_REPETITIONS).contains(&self.n_reps) {
            return Err(Error::InvalidArgument(format!("n_reps {} outside 1..=6", self.n_reps)));
        }
        if self.burst_ms == 0 {
            return Err(Error::InvalidArgument("burst_ms must be positive".into()));
        }
        if self.subjects.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("subject ids start at 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Signature {
    amp: f64,
    freq_hz: f64,
    shape: f64,
    duty: f64,
    gate_hz: f64,
}

fn class_signatures(spec: &SynthSpec) -> Vec<[Signature; NUM_CHANNELS]> {
    let mut rng = stream_rng(spec.seed, "synth-class", 0);
    (0..spec.n_classes)
        .map(|_| {
            std::array::from_fn(|_| Signature {
                amp: rng.random_range(0.2..1.5),
                freq_hz: rng.random_range(20.0..150.0),
                shape: rng.random_range(0.5f64.ln()..2.0f64.ln()).exp(),
                duty: rng.random_range(0.1..1.0),
                gate_hz: rng.random_range(15.0..40.0),
            })
        })
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn push_rest(channels: &mut [Vec<f64>], n: usize, sigma: f64, rng: &mut ChaCha8Rng) {
    for ch in channels.iter_mut() {
        ch.extend((0..n).map(|_| sigma * gauss(rng)));
    }
}

fn push_burst(
    channels: &mut [Vec<f64>],
    n: usize,
    sig: &[Signature; NUM_CHANNELS],
    gain: &[f64; NUM_CHANNELS],
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
) {
    const AR: f64 = 0.9;
    let ramp = ms_to_samples(100).min(n / 2).max(1) as f64;
    let env_hz = rng.random_range(0.5..2.0);
    let env_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let env: Vec<f64> = (0..n)
        .map(|t| {
            let edge = ((t as f64 + 1.0) / ramp).min((n - t) as f64 / ramp).min(1.0);
            let slow = 1.0 + 0.15 * (std::f64::consts::TAU * env_hz * t as f64 / SAMPLE_RATE_HZ + env_phase).sin();
            edge * slow
        })
        .collect();
    for (c, ch) in channels.iter_mut().enumerate() {
        let s = sig[c];
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let w = std::f64::consts::TAU * s.freq_hz / SAMPLE_RATE_HZ;
        let gate_phase: f64 = rng.random_range(0.0..1.0);
        let mut band = gauss(rng);
        for (t, &e) in env.iter().enumerate() {
            band = AR * band + (1.0 - AR * AR).sqrt() * gauss(rng);
            let carrier = (w * t as f64 + phase).sin();
            let shaped = carrier.signum() * carrier.abs().powf(s.shape);
            let on = (s.gate_hz * t as f64 / SAMPLE_RATE_HZ + gate_phase).fract() < s.duty;
            let active = if on { shaped + spec.texture * band } else { 0.0 };
            ch.push(gain[c] * s.amp * e * active + spec.noise * gauss(rng));
        }
    }
}

/// Generate one recording per subject in `spec.subjects`.
///
/// Layout: a leading rest, then for each class and repetition a burst followed by a rest.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<Recording>> {
    spec.validate()?;
    let sigs = class_signatures(spec);
    let burst = ms_to_samples(spec.burst_ms);
    let rest = ms_to_samples(spec.rest_ms);
    let per_subject = rest + spec.n_classes * spec.n_reps as usize * (burst + rest);

    spec.subjects
        .iter()
        .map(|&subject| {
            let mut rng = stream_rng(spec.seed, "synth-subject", subject as u64);
            let gain: [f64; NUM_CHANNELS] = std::array::from_fn(|_| rng.random_range(0.8..1.2));
            let mut channels = vec![Vec::with_capacity(per_subject); NUM_CHANNELS];
            let mut stimulus = Vec::with_capacity(per_subject);
            let mut repetition = Vec::with_capacity(per_subject);

            push_rest(&mut channels, rest, spec.noise, &mut rng);
            stimulus.resize(rest, 0);
            repetition.resize(rest, 0);
            for k in 0..spec.n_classes {
                for rep in 1..=spec.n_reps {
                    push_burst(&mut channels, burst, &sigs[k], &gain, spec, &mut rng);
                    stimulus.resize(stimulus.len() + burst, k as u8 + 1);
                    repetition.resize(repetition.len() + burst, rep);
                    push_rest(&mut channels, rest, spec.noise, &mut rng);
                    stimulus.resize(stimulus.len() + rest, 0);
                    repetition.resize(repetition.len() + rest, 0);
                }
            }
            Recording::new(subject, channels, stimulus, repetition)
        })
        .collect()
}
