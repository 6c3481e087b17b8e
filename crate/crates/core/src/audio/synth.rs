//! Synthetic speech-like test signals.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Waveform;
use crate::error::Result;
use crate::Seed;

/// Nominal formant centres (Hz) before per-voice scaling.
const FORMANTS: [f64; 3] = [500.0, 1500.0, 2500.0];
/// Samples per articulation segment; formants are redrawn per segment.
const SEGMENT: usize = 800;
pub const SYNTH_RMS: f64 = 0.1;

/// Voice parameters of the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthVoice {
    /// Multiplier on the nominal formant frequencies.
    pub formant_scale: f64,
    /// Amplitude-envelope rate in Hz.
    pub syllable_rate: f64,
}

impl SynthVoice {
    pub fn random(seed: Seed) -> Self {
        let mut rng = seed.rng();
        SynthVoice {
            formant_scale: rng.random_range(0.85..1.2),
            syllable_rate: rng.random_range(3.0..5.0),
        }
    }
}

/// Formant-filtered noise with a syllabic envelope, normalised to
/// [`SYNTH_RMS`].
pub fn speech_like(seed: Seed, voice: SynthVoice, duration_secs: f64, sample_rate: u32) -> Result<Waveform> {
    let sr = sample_rate as f64;
    let len = ((duration_secs * sr).round() as usize).max(1);
    let mut rng = seed.rng();
    let excitation: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; len];
    // two-sample output history per resonator
    let mut hist = [[0.0f64; 2]; 3];
    for start in (0..len).step_by(SEGMENT) {
        let end = (start + SEGMENT).min(len);
        for (j, h) in hist.iter_mut().enumerate() {
            let f = (FORMANTS[j] * voice.formant_scale * rng.random_range(0.8..1.2)).min(0.45 * sr);
            let bw = 80.0 + 60.0 * j as f64;
            let r = (-PI * bw / sr).exp();
            let a1 = 2.0 * r * (2.0 * PI * f / sr).cos();
            let a2 = -r * r;
            let weight = 1.0 / (j + 1) as f64;
            for n in start..end {
                let v = (1.0 - r) * excitation[n] + a1 * h[0] + a2 * h[1];
                h[1] = h[0];
                h[0] = v;
                y[n] += v * weight;
            }
        }
    }
    let rate = voice.syllable_rate;
    let phase0: f64 = rng.random_range(0.0..6.0);
    for (n, v) in y.iter_mut().enumerate() {
        let t = n as f64 / sr;
        *v *= 0.55 + 0.45 * (2.0 * PI * rate * t + phase0).sin();
    }
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        y.iter_mut().for_each(|v| *v *= SYNTH_RMS / rms);
    }
    Waveform::new(y, sample_rate)
}

/// White Gaussian noise with the given RMS.
pub fn white_noise(seed: Seed, len: usize, sample_rate: u32, rms: f64) -> Result<Waveform> {
    let mut rng = seed.rng();
    let v = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            rms * z
        })
        .collect::<Vec<f64>>();
    Waveform::new(v, sample_rate)
}
