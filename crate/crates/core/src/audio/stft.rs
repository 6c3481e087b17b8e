//! Short-time Fourier transform with weighted overlap-add synthesis.
//!
//! Framing: the signal is zero-padded by `window_size / 2` on the left and
//! padded on the right up to `(frames - 1) * hop + window_size`, with
//! `frames = 1 + ceil(len / hop)`. Sample `i` of the input therefore sits at
//! the centre of frame `i / hop` when `i` is a multiple of the hop.
//!
//! Synthesis applies the window a second time and divides by the summed
//! squared window, so analysis followed by synthesis is exact up to
//! rounding for the supported Hann hops.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StftParams {
    window_size: usize,
    hop_size: usize,
    window: WindowKind,
}

impl Default for StftParams {
    /// Hann, 512 / 128.
    fn default() -> Self {
        StftParams {
            window_size: 512,
            hop_size: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    /// Hann window with hop equal to a half or a quarter of the window.
    pub fn new(window_size: usize, hop_size: usize) -> Result<Self> {
        let p = StftParams {
            window_size,
            hop_size,
            window: WindowKind::Hann,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.window_size;
        let h = self.hop_size;
        let cola = n >= 4 && n % 4 == 0 && (h == n / 2 || h == n / 4);
        if !cola {
            return Err(Error::InvalidOverlap { window: n, hop: h });
        }
        Ok(())
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop_size)
    }

    pub(crate) fn pad_left(&self) -> usize {
        self.window_size / 2
    }

    /// Frequency in Hz of bin `k` at `sample_rate`.
    pub fn bin_frequency(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.window_size as f64
    }
}

/// Amplitude/phase matrices (`frames x bins`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    amplitude: Vec<f64>,
    phase: Vec<f64>,
    frames: usize,
    bins: usize,
    params: StftParams,
    sample_rate: u32,
    original_length: usize,
}

impl Spectrogram {
    pub fn from_parts(
        amplitude: Vec<f64>,
        phase: Vec<f64>,
        frames: usize,
        params: StftParams,
        sample_rate: u32,
        original_length: usize,
    ) -> Result<Self> {
        let bins = params.bins();
        if amplitude.len() != frames * bins || phase.len() != frames * bins {
            return Err(Error::Shape(format!(
                "expected {frames}x{bins} amplitude and phase matrices"
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Shape("amplitude entries must be finite and >= 0".into()));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::Shape("phase entries must be finite".into()));
        }
        Ok(Spectrogram {
            amplitude,
            phase,
            frames,
            bins,
            params,
            sample_rate,
            original_length,
        })
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn amp(&self, frame: usize, bin: usize) -> f64 {
        self.amplitude[frame * self.bins + bin]
    }

    /// Complex coefficients `a * exp(i p)`.
    pub fn to_complex(&self) -> ComplexFrames {
        ComplexFrames {
            data: polar(&self.amplitude, &self.phase),
            frames: self.frames,
            bins: self.bins,
        }
    }
}

const PIO2_1: f64 = 1.570_796_326_734_125_614_17e0;
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_2T: f64 = 2.022_266_248_795_950_631_54e-21;
/// Adding and subtracting 1.5 * 2^52 rounds to the nearest integer.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;
const SIN: [f64; 6] = [
    -1.666_666_666_666_663_243_48e-1,
    8.333_333_333_322_489_461_24e-3,
    -1.984_126_982_985_794_931_34e-4,
    2.755_731_370_707_006_767_89e-6,
    -2.505_076_025_340_686_341_95e-8,
    1.589_690_995_211_550_102_21e-10,
];
const COS: [f64; 6] = [
    4.166_666_666_666_660_190_37e-2,
    -1.388_888_888_887_410_957_49e-3,
    2.480_158_728_947_672_941_78e-5,
    -2.755_731_435_139_066_330_35e-7,
    2.087_572_321_298_174_827_90e-9,
    -1.135_964_755_778_819_482_65e-11,
];

/// `a * exp(i p)` elementwise. A branch-free quadrant reduction and
/// minimax polynomials let the loop vectorize; phases beyond `1e5` rad
/// take the libm path.
pub(crate) fn polar(amplitude: &[f64], phase: &[f64]) -> Vec<Complex64> {
    if phase.iter().any(|p| !(p.abs() < 1e5)) {
        return amplitude
            .iter()
            .zip(phase)
            .map(|(&a, &p)| {
                let (sin, cos) = p.sin_cos();
                Complex64::new(a * cos, a * sin)
            })
            .collect();
    }
    let mut out = vec![Complex64::default(); amplitude.len()];
    for ((o, &a), &x) in out.iter_mut().zip(amplitude).zip(phase) {
        let shifted = x * std::f64::consts::FRAC_2_PI + ROUND_MAGIC;
        let q = shifted.to_bits();
        let k = shifted - ROUND_MAGIC;
        let r = (x - k * PIO2_1) - k * PIO2_2 - k * PIO2_2T;
        let z = r * r;
        let ps = SIN[0] + z * (SIN[1] + z * (SIN[2] + z * (SIN[3] + z * (SIN[4] + z * SIN[5]))));
        let pc = COS[0] + z * (COS[1] + z * (COS[2] + z * (COS[3] + z * (COS[4] + z * COS[5]))));
        let sin = r + r * z * ps;
        let hz = 0.5 * z;
        let w = 1.0 - hz;
        let cos = w + (((1.0 - w) - hz) + z * z * pc);
        // quadrant k mod 4 sits in the low mantissa bits
        let mask = (q & 1).wrapping_neg();
        let (sb, cb) = (sin.to_bits(), cos.to_bits());
        let s_bits = ((sb & !mask) | (cb & mask)) ^ ((q & 2) << 62);
        let c_bits = ((cb & !mask) | (sb & mask)) ^ (((q + 1) & 2) << 62);
        *o = Complex64::new(a * f64::from_bits(c_bits), a * f64::from_bits(s_bits));
    }
    out
}

/// Raw complex STFT coefficients, `frames x bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFrames {
    pub data: Vec<Complex64>,
    pub frames: usize,
    pub bins: usize,
}

impl ComplexFrames {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.bins..(f + 1) * self.bins]
    }

    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }
}

struct Engine {
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

thread_local! {
    static ENGINES: RefCell<(RealFftPlanner<f64>, HashMap<usize, Arc<Engine>>)> =
        RefCell::new((RealFftPlanner::new(), HashMap::new()));
}

fn engine(n: usize) -> Arc<Engine> {
    ENGINES.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        if let Some(e) = cache.get(&n) {
            return e.clone();
        }
        let e = Arc::new(Engine {
            window: hann(n),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        });
        cache.insert(n, e.clone());
        e
    })
}

/// Window offsets `lo..hi` that land inside `0..len` for a frame at `start`.
fn overlap(start: isize, n: usize, len: usize) -> (usize, usize) {
    let lo = (-start).clamp(0, n as isize) as usize;
    let hi = (len as isize - start).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn check_len(len: usize, p: &StftParams) -> Result<()> {
    if len < p.window_size {
        return Err(Error::SignalTooShort {
            len,
            needed: p.window_size,
        });
    }
    Ok(())
}

/// Forward transform of raw samples to complex coefficients.
pub fn stft_complex(samples: &[f64], p: &StftParams) -> Result<ComplexFrames> {
    p.validate()?;
    check_len(samples.len(), p)?;
    let n = p.window_size;
    let hop = p.hop_size;
    let bins = p.bins();
    let frames = p.frame_count(samples.len());
    let pad = p.pad_left();
    let eng = engine(n);
    let mut buf = eng.forward.make_input_vec();
    let mut spec = eng.forward.make_output_vec();
    let mut scratch = eng.forward.make_scratch_vec();
    let mut data = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = (f * hop) as isize - pad as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            *b = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] * eng.window[i]
            } else {
                0.0
            };
        }
        eng.forward
            .process_with_scratch(&mut buf, &mut spec, &mut scratch)
            .expect("buffer sizes match plan");
        data.extend_from_slice(&spec);
    }
    Ok(ComplexFrames { data, frames, bins })
}

/// Weighted overlap-add synthesis of `len` samples.
pub fn istft_complex(cf: &ComplexFrames, len: usize, p: &StftParams) -> Result<Vec<f64>> {
    p.validate()?;
    if cf.bins != p.bins() || cf.data.len() != cf.frames * cf.bins {
        return Err(Error::Shape("coefficient matrix does not match STFT parameters".into()));
    }
    if cf.frames != p.frame_count(len) {
        return Err(Error::Shape(format!(
            "{} frames cannot synthesize {len} samples",
            cf.frames
        )));
    }
    let n = p.window_size;
    let hop = p.hop_size;
    let pad = p.pad_left();
    let eng = engine(n);
    let mut spec = eng.inverse.make_input_vec();
    let mut buf = eng.inverse.make_output_vec();
    let mut scratch = eng.inverse.make_scratch_vec();
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let scale = 1.0 / n as f64;
    for f in 0..cf.frames {
        spec.copy_from_slice(cf.frame(f));
        // c2r requires real DC and Nyquist terms
        spec[0].im = 0.0;
        spec[n / 2].im = 0.0;
        eng.inverse
            .process_with_scratch(&mut spec, &mut buf, &mut scratch)
            .expect("buffer sizes match plan");
        let start = (f * hop) as isize - pad as isize;
        let (lo, hi) = overlap(start, n, len);
        for i in lo..hi {
            let idx = (start + i as isize) as usize;
            let w = eng.window[i];
            out[idx] += buf[i] * scale * w;
            norm[idx] += w * w;
        }
    }
    for (o, z) in out.iter_mut().zip(&norm) {
        if *z > 1e-12 {
            *o /= z;
        }
    }
    Ok(out)
}

/// Gradient of a loss with respect to the input samples, given the
/// gradient with respect to each complex coefficient as
/// `dL/dRe + i dL/dIm` in `grad` (same layout as the forward output).
pub fn stft_backward(grad: &ComplexFrames, len: usize, p: &StftParams) -> Result<Vec<f64>> {
    p.validate()?;
    let n = p.window_size;
    let hop = p.hop_size;
    let pad = p.pad_left();
    let eng = engine(n);
    let mut spec = eng.inverse.make_input_vec();
    let mut buf = eng.inverse.make_output_vec();
    let mut scratch = eng.inverse.make_scratch_vec();
    let mut out = vec![0.0; len];
    for f in 0..grad.frames {
        let g = grad.frame(f);
        if g.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            continue;
        }
        // dL/dy_n = Re(sum_k g_k e^{+i 2 pi k n / N}) over the one-sided bins;
        // c2r doubles interior bins, so halve them here.
        spec[0] = Complex64::new(g[0].re, 0.0);
        spec[n / 2] = Complex64::new(g[n / 2].re, 0.0);
        for k in 1..n / 2 {
            spec[k] = g[k] * 0.5;
        }
        eng.inverse
            .process_with_scratch(&mut spec, &mut buf, &mut scratch)
            .expect("buffer sizes match plan");
        let start = (f * hop) as isize - pad as isize;
        let (lo, hi) = overlap(start, n, len);
        for i in lo..hi {
            out[(start + i as isize) as usize] += buf[i] * eng.window[i];
        }
    }
    Ok(out)
}

pub fn stft(w: &Waveform, p: &StftParams) -> Result<Spectrogram> {
    let cf = stft_complex(w.samples(), p)?;
    let mut amplitude = Vec::with_capacity(cf.data.len());
    let mut phase = Vec::with_capacity(cf.data.len());
    for z in &cf.data {
        amplitude.push(z.norm());
        let mut ph = z.arg();
        if ph <= -PI {
            ph = PI;
        }
        phase.push(ph);
    }
    Ok(Spectrogram {
        amplitude,
        phase,
        frames: cf.frames,
        bins: cf.bins,
        params: *p,
        sample_rate: w.sample_rate(),
        original_length: w.len(),
    })
}

pub fn istft(sg: &Spectrogram) -> Result<Waveform> {
    sg.params.validate()?;
    let samples = istft_complex(&sg.to_complex(), sg.original_length, &sg.params)?;
    Waveform::new(samples, sg.sample_rate)
}
