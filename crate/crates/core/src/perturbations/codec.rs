//! Built-in lossy codec stand-ins and the external codec registry.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::audio::{istft_complex, read_wav, resample, stft_complex, write_wav, StftParams, Waveform};
use crate::error::{Error, Result};
use crate::subprocess::run_shell;

/// Levels per residual stage: indices -2..=2.
const STAGE_HALF_LEVELS: f64 = 2.0;
/// Step shrink factor from one residual stage to the next.
pub const STAGE_STEP_RATIO: f64 = 0.6;
const SUBBANDS: usize = 16;
/// Residual stages used by the bandwidth-limited stand-in.
pub const ENCODEC_LIKE_STAGES: usize = 8;

/// Residual scalar quantization of STFT coefficients in uniform subbands.
///
/// Each subband's first-stage step is its RMS coefficient magnitude; every
/// further stage quantizes the remaining residual with a step
/// [`STAGE_STEP_RATIO`] times smaller. Bins above `cutoff_hz` are dropped.
pub fn residual_subband_codec(s: &Waveform, stages: usize, cutoff_hz: Option<f64>) -> Result<Waveform> {
    let p = StftParams::default();
    let mut cf = stft_complex(s.samples(), &p)?;
    let bins = cf.bins;
    let band_width = bins.div_ceil(SUBBANDS);
    let keep = |k: usize| match cutoff_hz {
        Some(fc) => p.bin_frequency(k, s.sample_rate()) <= fc,
        None => true,
    };
    for band in 0..SUBBANDS {
        let lo = band * band_width;
        let hi = ((band + 1) * band_width).min(bins);
        if lo >= hi {
            continue;
        }
        let mut energy = 0.0;
        for f in 0..cf.frames {
            for k in lo..hi {
                energy += cf.data[f * bins + k].norm_sqr();
            }
        }
        let base = (energy / (cf.frames * (hi - lo)) as f64).sqrt();
        for f in 0..cf.frames {
            for k in lo..hi {
                let z = &mut cf.data[f * bins + k];
                if !keep(k) || base == 0.0 {
                    *z = Default::default();
                    continue;
                }
                z.re = quantize_residual(z.re, base, stages);
                z.im = quantize_residual(z.im, base, stages);
            }
        }
    }
    s.with_samples(istft_complex(&cf, s.len(), &p)?)
}

fn quantize_residual(v: f64, base: f64, stages: usize) -> f64 {
    let mut step = base;
    let mut recon = 0.0;
    for _ in 0..stages {
        let q = ((v - recon) / step).round().clamp(-STAGE_HALF_LEVELS, STAGE_HALF_LEVELS);
        recon += q * step;
        step *= STAGE_STEP_RATIO;
    }
    recon
}

/// How an external codec is invoked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecCommand {
    /// One command reading `{in}` (WAV) and writing `{out}` (WAV).
    RoundTrip(String),
    /// `encode` writes a bitstream to `{out}`; `decode` turns it back into WAV.
    EncodeDecode { encode: String, decode: String },
}

const PLACEHOLDERS: [&str; 3] = ["{in}", "{out}", "{param}"];

fn check_template(template: &str, required: &[&str]) -> Result<()> {
    for ph in required {
        if !template.contains(ph) {
            return Err(Error::Template {
                template: template.into(),
                reason: format!("missing placeholder {ph}"),
            });
        }
    }
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open..];
        let close = tail.find('}').ok_or_else(|| Error::Template {
            template: template.into(),
            reason: "unclosed `{`".into(),
        })?;
        let ph = &tail[..=close];
        if !PLACEHOLDERS.contains(&ph) {
            return Err(Error::Template {
                template: template.into(),
                reason: format!("unknown placeholder {ph}"),
            });
        }
        rest = &tail[close + 1..];
    }
    Ok(())
}

fn substitute(template: &str, input: &str, output: &str, param: f64) -> String {
    template
        .replace("{in}", input)
        .replace("{out}", output)
        .replace("{param}", &param.to_string())
}

/// Environment variable prefix for codec templates.
pub const CODEC_ENV_PREFIX: &str = "AUDIOMARK_CODEC_";

/// Named external codecs.
#[derive(Debug, Clone)]
pub struct CodecRegistry {
    codecs: BTreeMap<String, CodecCommand>,
    timeout: Duration,
}

impl Default for CodecRegistry {
    fn default() -> Self {
        CodecRegistry {
            codecs: BTreeMap::new(),
            timeout: Duration::from_secs(120),
        }
    }
}

impl CodecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Round-trip templates from `AUDIOMARK_CODEC_<NAME>` variables.
    /// Malformed templates are reported, not skipped.
    pub fn from_env() -> Result<Self> {
        let mut reg = Self::new();
        for (key, value) in std::env::vars() {
            if let Some(name) = key.strip_prefix(CODEC_ENV_PREFIX) {
                reg.register(&name.to_ascii_lowercase(), &value)?;
            }
        }
        Ok(reg)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Register a round-trip template containing `{in}`, `{out}` and `{param}`.
    pub fn register(&mut self, name: &str, template: &str) -> Result<()> {
        check_template(template, &PLACEHOLDERS)?;
        self.codecs
            .insert(name.to_ascii_lowercase(), CodecCommand::RoundTrip(template.into()));
        Ok(())
    }

    /// Register an encode/decode pair; the encoder takes `{param}`.
    pub fn register_pair(&mut self, name: &str, encode: &str, decode: &str) -> Result<()> {
        check_template(encode, &PLACEHOLDERS)?;
        check_template(decode, &PLACEHOLDERS[..2])?;
        self.codecs.insert(
            name.to_ascii_lowercase(),
            CodecCommand::EncodeDecode {
                encode: encode.into(),
                decode: decode.into(),
            },
        );
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.codecs.contains_key(&name.to_ascii_lowercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.codecs.keys().map(String::as_str)
    }

    /// Encode and decode `s`; the result is resampled to the input rate and
    /// cut or zero-padded to the input length.
    pub fn round_trip(&self, name: &str, s: &Waveform, param: f64) -> Result<Waveform> {
        let cmd = self
            .codecs
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::CodecUnavailable(name.into()))?;
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("in.wav");
        let output = dir.path().join("out.wav");
        write_wav(&input, s)?;
        let (i, o) = (input.to_string_lossy(), output.to_string_lossy());
        match cmd {
            CodecCommand::RoundTrip(t) => self.run(&substitute(t, &i, &o, param))?,
            CodecCommand::EncodeDecode { encode, decode } => {
                let mid = dir.path().join("encoded.bin");
                let m = mid.to_string_lossy();
                self.run(&substitute(encode, &i, &m, param))?;
                self.run(&substitute(decode, &m, &o, param))?;
            }
        }
        let decoded = read_wav(&output).map_err(|e| Error::Codec {
            message: format!("codec `{name}` produced no readable WAV: {e}"),
            stderr: String::new(),
        })?;
        let mut samples = resample(&decoded, s.sample_rate())?.into_samples();
        samples.resize(s.len(), 0.0);
        s.with_samples(samples)
    }

    fn run(&self, command: &str) -> Result<()> {
        run_shell(command, b"", self.timeout)
            .map(|_| ())
            .map_err(|e| Error::Codec {
                message: format!("`{command}`: {}", e.message()),
                stderr: e.stderr(),
            })
    }
}
