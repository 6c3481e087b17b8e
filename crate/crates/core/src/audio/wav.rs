//! 16-bit PCM WAV reading and writing.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Read a PCM WAV file, downmixing multi-channel audio by averaging.
/// The sample rate is kept as stored.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "only integer PCM is supported".into(),
        });
    }
    let channels = spec.channels.max(1) as usize;
    let full_scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
    let raw: Vec<i32> = reader
        .into_samples::<i32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| map_hound(path, e))?;
    let samples: Vec<f64> = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&v| v as f64 / full_scale).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Write mono 16-bit PCM. Samples are clamped to [-1, 1] here and only here.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in w.samples() {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    Ok(())
}

/// What `write_wav` followed by `read_wav` would return, without the disk.
pub fn pcm16_round_trip(w: &Waveform) -> Result<Waveform> {
    let samples = w.samples().iter().map(|&s| quantize_i16(s) as f64 / 32768.0).collect();
    Waveform::new(samples, w.sample_rate())
}

pub(crate) fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "unsupported WAV encoding".into(),
        },
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}
