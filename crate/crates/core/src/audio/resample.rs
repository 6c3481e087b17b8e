use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

const HALF_TAPS: isize = 16;

/// Band-limited resampling with a 32-tap Blackman-windowed sinc kernel.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate() {
        return Ok(w.clone());
    }
    let ratio = target_rate as f64 / w.sample_rate() as f64;
    let out_len = ((w.len() as f64 * ratio).round() as usize).max(1);
    Waveform::new(resample_ratio(w.samples(), ratio, out_len), target_rate)
}

/// Output sample `j` interpolates the input at position `j / ratio`.
/// Downsampling (`ratio < 1`) lowers the kernel cutoff to avoid aliasing.
pub fn resample_ratio(x: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let cutoff = ratio.min(1.0);
    let step = 1.0 / ratio;
    let n = x.len() as isize;
    (0..out_len)
        .map(|j| {
            let t = j as f64 * step;
            let center = t.floor() as isize;
            let mut acc = 0.0;
            for i in (center - HALF_TAPS + 1)..=(center + HALF_TAPS) {
                if i < 0 || i >= n {
                    continue;
                }
                let d = t - i as f64;
                acc += x[i as usize] * kernel(d, cutoff);
            }
            acc
        })
        .collect()
}

fn kernel(d: f64, cutoff: f64) -> f64 {
    let half = HALF_TAPS as f64;
    if d.abs() >= half {
        return 0.0;
    }
    let arg = PI * cutoff * d;
    let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
    // Blackman window over [-half, half]
    let u = (d + half) / (2.0 * half);
    let win = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
    cutoff * sinc * win
}
