use crate::error::{Error, Result};

/// Mono signal with its sample rate. Samples are 64-bit and unclamped;
/// clamping to [-1, 1] happens only when writing 16-bit PCM.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power, `sum(x^2) / T`.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// New waveform with the same rate and different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }

    /// `self + delta`, sample by sample.
    pub fn add(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.samples.len() {
            return Err(Error::Shape(format!(
                "perturbation has {} samples, signal has {}",
                delta.len(),
                self.samples.len()
            )));
        }
        self.with_samples(self.samples.iter().zip(delta).map(|(a, b)| a + b).collect())
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
