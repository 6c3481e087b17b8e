//! No-box perturbations, their composition, and codec plumbing.

mod codec;
mod dsp;

pub use codec::{
    residual_subband_codec, CodecCommand, CodecRegistry, CODEC_ENV_PREFIX, ENCODEC_LIKE_STAGES,
    STAGE_STEP_RATIO,
};
pub use dsp::{butterworth, quantize, scale_to_snr, sosfilt, Biquad, FilterBand, ECHO_DECAY};

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, resample_ratio, Waveform};
use crate::error::{Error, Result};
use crate::Seed;

pub const BUTTERWORTH_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    TimeStretch,
    GaussianNoise,
    BackgroundNoise,
    SoundStreamLike,
    OpusExt,
    EncodecLike,
    Quantization,
    HighpassFilter,
    LowpassFilter,
    Smooth,
    Echo,
    Mp3Ext,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 12] = [
        PerturbationKind::TimeStretch,
        PerturbationKind::GaussianNoise,
        PerturbationKind::BackgroundNoise,
        PerturbationKind::SoundStreamLike,
        PerturbationKind::OpusExt,
        PerturbationKind::EncodecLike,
        PerturbationKind::Quantization,
        PerturbationKind::HighpassFilter,
        PerturbationKind::LowpassFilter,
        PerturbationKind::Smooth,
        PerturbationKind::Echo,
        PerturbationKind::Mp3Ext,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PerturbationKind::TimeStretch => "time_stretch",
            PerturbationKind::GaussianNoise => "gaussian_noise",
            PerturbationKind::BackgroundNoise => "background_noise",
            PerturbationKind::SoundStreamLike => "soundstream",
            PerturbationKind::OpusExt => "opus",
            PerturbationKind::EncodecLike => "encodec",
            PerturbationKind::Quantization => "quantization",
            PerturbationKind::HighpassFilter => "highpass",
            PerturbationKind::LowpassFilter => "lowpass",
            PerturbationKind::Smooth => "smooth",
            PerturbationKind::Echo => "echo",
            PerturbationKind::Mp3Ext => "mp3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.label() == key || format!("{k:?}").to_ascii_lowercase() == key.replace('_', ""))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown perturbation `{s}`")))
    }

    /// Allowed parameter range, inclusive.
    pub fn range(&self) -> (f64, f64) {
        match self {
            PerturbationKind::TimeStretch => (0.7, 1.5),
            PerturbationKind::GaussianNoise | PerturbationKind::BackgroundNoise => (5.0, 40.0),
            PerturbationKind::SoundStreamLike => (4.0, 16.0),
            PerturbationKind::OpusExt => (16.0, 256.0),
            PerturbationKind::EncodecLike => (1.5, 24.0),
            PerturbationKind::Quantization => (4.0, 64.0),
            PerturbationKind::HighpassFilter | PerturbationKind::LowpassFilter => (0.1, 0.5),
            PerturbationKind::Smooth => (6.0, 22.0),
            PerturbationKind::Echo => (0.1, 0.9),
            PerturbationKind::Mp3Ext => (8.0, 40.0),
        }
    }

    /// Parameter values swept by the no-box benchmark.
    pub fn grid(&self) -> &'static [f64] {
        match self {
            PerturbationKind::TimeStretch => &[0.7, 0.9, 1.1, 1.3, 1.5],
            PerturbationKind::GaussianNoise | PerturbationKind::BackgroundNoise => {
                &[5.0, 10.0, 20.0, 30.0, 40.0]
            }
            PerturbationKind::SoundStreamLike => &[4.0, 6.0, 8.0, 12.0, 16.0],
            PerturbationKind::OpusExt => &[16.0, 32.0, 64.0, 128.0, 256.0],
            PerturbationKind::EncodecLike => &[1.5, 3.0, 6.0, 12.0, 24.0],
            PerturbationKind::Quantization => &[4.0, 8.0, 16.0, 32.0, 64.0],
            PerturbationKind::HighpassFilter | PerturbationKind::LowpassFilter => {
                &[0.1, 0.2, 0.3, 0.4, 0.5]
            }
            PerturbationKind::Smooth => &[6.0, 10.0, 14.0, 18.0, 22.0],
            PerturbationKind::Echo => &[0.1, 0.3, 0.5, 0.7, 0.9],
            PerturbationKind::Mp3Ext => &[8.0, 16.0, 24.0, 32.0, 40.0],
        }
    }

    /// Registry name of the codec that implements or overrides this kind.
    pub fn codec_name(&self) -> Option<&'static str> {
        match self {
            PerturbationKind::OpusExt => Some("opus"),
            PerturbationKind::Mp3Ext => Some("mp3"),
            PerturbationKind::SoundStreamLike => Some("soundstream"),
            PerturbationKind::EncodecLike => Some("encodec"),
            _ => None,
        }
    }

    /// Only available through an external codec.
    pub fn is_external(&self) -> bool {
        matches!(self, PerturbationKind::OpusExt | PerturbationKind::Mp3Ext)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub param: f64,
    pub seed: Seed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_corpus: Option<PathBuf>,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, param: f64, seed: Seed) -> Self {
        PerturbationSpec {
            kind,
            param,
            seed,
            noise_corpus: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kind.range();
        if !(self.param >= lo && self.param <= hi) {
            return Err(Error::Range {
                kind: self.kind.label().into(),
                value: self.param,
                lo,
                hi,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPipeline {
    pub stages: Vec<PerturbationSpec>,
}

impl PerturbationPipeline {
    pub fn new(stages: Vec<PerturbationSpec>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidConfig("pipeline needs at least one stage".into()));
        }
        Ok(PerturbationPipeline { stages })
    }
}

/// Applies perturbations, consulting `registry` for external codecs.
#[derive(Debug, Clone, Default)]
pub struct Perturber {
    registry: CodecRegistry,
}

impl Perturber {
    pub fn new(registry: CodecRegistry) -> Self {
        Perturber { registry }
    }

    pub fn from_env() -> Result<Self> {
        Ok(Self::new(CodecRegistry::from_env()?))
    }

    pub fn registry(&self) -> &CodecRegistry {
        &self.registry
    }

    /// Whether `kind` can run with the configured codecs.
    pub fn supports(&self, kind: PerturbationKind) -> bool {
        !kind.is_external() || kind.codec_name().is_some_and(|n| self.registry.contains(n))
    }

    pub fn apply(&self, p: &PerturbationSpec, s: &Waveform) -> Result<Waveform> {
        p.validate()?;
        let x = s.samples();
        let sr = s.sample_rate();
        match p.kind {
            PerturbationKind::GaussianNoise => {
                let mut rng = p.seed.rng();
                let g: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                s.with_samples(dsp::scale_to_snr(x, &g, p.param)?)
            }
            PerturbationKind::BackgroundNoise => {
                let noise = match &p.noise_corpus {
                    Some(path) => corpus_excerpt(path, p.seed, x.len(), sr)?,
                    None => {
                        let mut rng = p.seed.rng();
                        let white: Vec<f64> =
                            (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                        dsp::pink_from_white(&white)
                    }
                };
                s.with_samples(dsp::scale_to_snr(x, &noise, p.param)?)
            }
            PerturbationKind::TimeStretch => {
                let out_len = ((x.len() as f64 / p.param).round() as usize).max(1);
                Waveform::new(resample_ratio(x, 1.0 / p.param, out_len), sr)
            }
            PerturbationKind::Quantization => {
                s.with_samples(dsp::quantize(x, p.param.round() as usize))
            }
            PerturbationKind::HighpassFilter | PerturbationKind::LowpassFilter => {
                let band = if p.kind == PerturbationKind::HighpassFilter {
                    FilterBand::Highpass
                } else {
                    FilterBand::Lowpass
                };
                let sos = butterworth(BUTTERWORTH_ORDER, p.param, band)?;
                s.with_samples(sosfilt(&sos, x))
            }
            PerturbationKind::Smooth => {
                let kernel = dsp::gaussian_kernel(p.param.round() as usize);
                s.with_samples(dsp::convolve_same_edge(x, &kernel))
            }
            PerturbationKind::Echo => {
                let delay = (p.param * sr as f64).round() as usize;
                s.with_samples(dsp::echo(x, delay))
            }
            PerturbationKind::SoundStreamLike | PerturbationKind::EncodecLike => {
                let name = p.kind.codec_name().expect("codec kinds are named");
                if self.registry.contains(name) {
                    return self.registry.round_trip(name, s, p.param);
                }
                if p.kind == PerturbationKind::SoundStreamLike {
                    residual_subband_codec(s, p.param.round() as usize, None)
                } else {
                    residual_subband_codec(s, ENCODEC_LIKE_STAGES, Some(p.param * 1000.0))
                }
            }
            PerturbationKind::OpusExt | PerturbationKind::Mp3Ext => {
                let name = p.kind.codec_name().expect("codec kinds are named");
                self.registry.round_trip(name, s, p.param)
            }
        }
    }

    /// Stages in order; an error names the failing stage.
    pub fn apply_pipeline(&self, pl: &PerturbationPipeline, s: &Waveform) -> Result<Waveform> {
        let mut cur = s.clone();
        for (stage, spec) in pl.stages.iter().enumerate() {
            cur = self.apply(spec, &cur).map_err(|e| Error::Pipeline {
                stage,
                source: Box::new(e),
            })?;
        }
        Ok(cur)
    }
}

/// Apply one perturbation with codecs taken from the environment.
pub fn apply(p: &PerturbationSpec, s: &Waveform) -> Result<Waveform> {
    Perturber::from_env()?.apply(p, s)
}

pub fn apply_pipeline(pl: &PerturbationPipeline, s: &Waveform) -> Result<Waveform> {
    Perturber::from_env()?.apply_pipeline(pl, s)
}

fn noise_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no WAV files in noise corpus {}",
            path.display()
        )));
    }
    Ok(files)
}

/// A seeded file and offset from the noise corpus, looped to `len`.
fn corpus_excerpt(path: &Path, seed: Seed, len: usize, sample_rate: u32) -> Result<Vec<f64>> {
    let files = noise_files(path)?;
    let mut rng = seed.rng();
    let file = &files[rng.random_range(0..files.len())];
    let noise = resample(&read_wav(file)?, sample_rate)?.into_samples();
    let offset = rng.random_range(0..noise.len());
    Ok((0..len).map(|i| noise[(offset + i) % noise.len()]).collect())
}
