//! Built-in reference schemes.
//!
//! Every carrier bit owns a seeded, disjoint set of STFT cells in the
//! 1-6 kHz band with a balanced +/-1 sign pattern `m`. Embedding scales
//! carrier amplitudes by `1 + g_i m (2 w_i - 1)` and leaves phase alone.
//! The decoder reads the log-amplitude correlation
//!
//! ```text
//! c_i = mean_j( m_j * ln sqrt(|X_j|^2 + EPS) )     over the cells of bit i
//! ```
//!
//! soft bits are `sigmoid(k c_i)`, and the probability family reports
//! `P_s = sigmoid(k * mean_i |c_i|)`.
//!
//! The per-bit gain `g_i` starts at the configured strength and is raised
//! over a few analysis/synthesis passes until each bit's correlation,
//! measured on the re-analysed signal, reaches `TARGET_RATIO * strength`.
//! This cancels host interference so clean clips decode exactly.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::seq::SliceRandom;

use super::{
    DetectionOutcome, DifferentiableScheme, LossTarget, SchemeConfig, SchemeKind,
    WatermarkBits, WatermarkScheme,
};
use crate::audio::{
    istft_complex, stft, stft_backward, stft_complex, Complex64, ComplexFrames, Spectrogram,
    StftParams, Waveform,
};
use crate::error::{Error, Result};
use crate::metrics::bitwise_accuracy;

pub const BAND_LOW_HZ: f64 = 1000.0;
pub const BAND_HIGH_HZ: f64 = 6000.0;
/// Power floor inside the log, near the 16-bit quantization level of a
/// 512-point frame.
const EPS: f64 = 1e-4;
const TARGET_RATIO: f64 = 0.65;
const EMBED_PASSES: usize = 4;
/// Approximate fraction of a carrier gain that survives re-analysis.
const GAIN_RESPONSE: f64 = 0.3;
const MAX_GAIN: f64 = 0.9;
const PROB_CLAMP: f64 = 1e-12;

/// Carrier cells for one frame count, sorted by cell index.
#[derive(Debug)]
pub struct CarrierLayout {
    pub frames: usize,
    pub bins: usize,
    /// `frame * bins + bin` for every carrier cell.
    pub cells: Vec<usize>,
    pub bit: Vec<usize>,
    pub sign: Vec<f64>,
    pub cells_per_bit: usize,
    pub n_bits: usize,
}

impl CarrierLayout {
    fn build(cfg: &SchemeConfig, frames: usize, sample_rate: u32) -> Result<Self> {
        let p = cfg.stft;
        let bins = p.bins();
        let n_bits = cfg.sync_len() + cfg.payload_bits;
        let bin_hz = sample_rate as f64 / p.window_size() as f64;
        let k_lo = (BAND_LOW_HZ / bin_hz).ceil() as usize;
        let k_hi = ((BAND_HIGH_HZ / bin_hz).floor() as usize).min(bins - 1);
        if frames < 3 || k_hi < k_lo {
            return Err(Error::SignalTooShort {
                len: frames,
                needed: 3,
            });
        }
        // first and last frames are mostly padding
        let mut cells: Vec<usize> = (1..frames - 1)
            .flat_map(|f| (k_lo..=k_hi).map(move |k| f * bins + k))
            .collect();
        let per_bit = (cells.len() / (2 * n_bits)) * 2;
        if per_bit < 2 {
            return Err(Error::SignalTooShort {
                len: frames,
                needed: frames * 2 * n_bits / cells.len().max(1) + 1,
            });
        }
        let mut rng = cfg.seed.derive("carriers").derive_index(frames as u64).rng();
        cells.shuffle(&mut rng);
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(per_bit * n_bits);
        for b in 0..n_bits {
            let mut signs: Vec<f64> = (0..per_bit)
                .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            signs.shuffle(&mut rng);
            for (j, s) in signs.into_iter().enumerate() {
                entries.push((cells[j * n_bits + b], b, s));
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        Ok(CarrierLayout {
            frames,
            bins,
            cells: entries.iter().map(|e| e.0).collect(),
            bit: entries.iter().map(|e| e.1).collect(),
            sign: entries.iter().map(|e| e.2).collect(),
            cells_per_bit: per_bit,
            n_bits,
        })
    }

    /// Per-bit correlations and per-cell log-amplitudes.
    fn correlations(&self, cf: &ComplexFrames) -> Vec<f64> {
        let mut c = vec![0.0; self.n_bits];
        for ((&cell, &b), &s) in self.cells.iter().zip(&self.bit).zip(&self.sign) {
            let z = cf.data[cell];
            c[b] += s * 0.5 * (z.norm_sqr() + EPS).ln();
        }
        let inv = 1.0 / self.cells_per_bit as f64;
        c.iter_mut().for_each(|v| *v *= inv);
        c
    }
}

/// SpreadSpectrum, SyncPayload and Probability schemes.
#[derive(Debug)]
pub struct ReferenceScheme {
    cfg: SchemeConfig,
    layouts: RwLock<HashMap<(usize, u32), Arc<CarrierLayout>>>,
}

/// Intermediate decoder state reused by the gradient.
struct Forward {
    cf: ComplexFrames,
    layout: Arc<CarrierLayout>,
    corr: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ReferenceScheme {
    pub fn new(cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind == SchemeKind::External {
            return Err(Error::InvalidConfig(
                "reference schemes cannot be external".into(),
            ));
        }
        Ok(ReferenceScheme {
            cfg,
            layouts: RwLock::new(HashMap::new()),
        })
    }

    pub fn n_carrier_bits(&self) -> usize {
        self.cfg.sync_len() + self.cfg.payload_bits
    }

    pub fn layout(&self, frames: usize, sample_rate: u32) -> Result<Arc<CarrierLayout>> {
        if let Some(l) = self.layouts.read().expect("poisoned").get(&(frames, sample_rate)) {
            return Ok(l.clone());
        }
        let l = Arc::new(CarrierLayout::build(&self.cfg, frames, sample_rate)?);
        self.layouts
            .write()
            .expect("poisoned")
            .insert((frames, sample_rate), l.clone());
        Ok(l)
    }

    fn params(&self) -> &StftParams {
        &self.cfg.stft
    }

    /// The full carrier bitstring for payload `w`: `sync ∪ w` or just `w`.
    pub fn carrier_bits(&self, w: &WatermarkBits) -> Result<WatermarkBits> {
        if w.len() != self.cfg.payload_bits {
            return Err(Error::InvalidBits(format!(
                "scheme expects {} payload bits, got {}",
                self.cfg.payload_bits,
                w.len()
            )));
        }
        Ok(match &self.cfg.sync_bits {
            Some(sync) if self.cfg.kind == SchemeKind::SyncPayload => sync.concat(w),
            _ => w.clone(),
        })
    }

    fn forward(&self, samples: &[f64], sample_rate: u32) -> Result<Forward> {
        let cf = stft_complex(samples, self.params())?;
        let layout = self.layout(cf.frames, sample_rate)?;
        let corr = layout.correlations(&cf);
        Ok(Forward { cf, layout, corr })
    }

    /// Raw per-bit correlations `c_i` of a signal.
    pub fn correlations(&self, s: &Waveform) -> Result<Vec<f64>> {
        Ok(self.forward(s.samples(), s.sample_rate())?.corr)
    }

    fn outcome(&self, corr: &[f64], truth: Option<&WatermarkBits>) -> Result<DetectionOutcome> {
        let k = self.cfg.sharpness;
        let soft_bits: Vec<f64> = corr.iter().map(|&c| sigmoid(k * c)).collect();
        let decoded = WatermarkBits::new(soft_bits.iter().map(|&p| p >= 0.5).collect())?;
        let tau = self.cfg.threshold;
        let sync_len = self.cfg.sync_len();
        let payload = if sync_len > 0 {
            decoded.slice(sync_len, decoded.len())?
        } else {
            decoded.clone()
        };
        let (score, sync_matched) = match self.cfg.kind {
            SchemeKind::Probability => {
                let mean_abs = corr.iter().map(|c| c.abs()).sum::<f64>() / corr.len() as f64;
                (Some(sigmoid(k * mean_abs)), None)
            }
            SchemeKind::SyncPayload => {
                let sync = self.cfg.sync_bits.as_ref().expect("validated");
                let matched = decoded.slice(0, sync_len)? == *sync;
                let score = match truth {
                    Some(w) if matched => Some(bitwise_accuracy(&payload, w)?),
                    Some(_) => Some(0.0),
                    None => None,
                };
                (score, Some(matched))
            }
            _ => {
                let score = truth.map(|w| bitwise_accuracy(&payload, w)).transpose()?;
                (score, None)
            }
        };
        let mut out = DetectionOutcome {
            decoded,
            soft_bits,
            score,
            decision: false,
            sync_matched,
            payload_offset: sync_len,
        };
        out.decision = self.cfg.rule().decide(&out, tau);
        Ok(out)
    }

    /// Carrier-modified spectrogram of the final embedding pass, before
    /// synthesis. Only carrier amplitudes differ from `stft(s)`.
    pub fn embedded_spectrogram(&self, s: &Waveform, w: &WatermarkBits) -> Result<Spectrogram> {
        let (cf, _) = self.embed_passes(s, w, self.cfg.embed_strength)?;
        let mut amplitude = Vec::with_capacity(cf.data.len());
        let mut phase = Vec::with_capacity(cf.data.len());
        let base = stft(s, self.params())?;
        for (i, z) in cf.data.iter().enumerate() {
            amplitude.push(z.norm());
            // gains are positive, so the original phase carries over exactly
            phase.push(base.phase()[i]);
        }
        Spectrogram::from_parts(
            amplitude,
            phase,
            cf.frames,
            *self.params(),
            s.sample_rate(),
            s.len(),
        )
    }

    fn embed_passes(
        &self,
        s: &Waveform,
        w: &WatermarkBits,
        strength: f64,
    ) -> Result<(ComplexFrames, Vec<f64>)> {
        let bits = self.carrier_bits(w)?;
        let polar = bits.polar();
        let base = stft_complex(s.samples(), self.params())?;
        let layout = self.layout(base.frames, s.sample_rate())?;
        let target = TARGET_RATIO * strength;
        let mut gains = vec![strength; layout.n_bits];
        let mut modified = base.clone();
        let mut out = Vec::new();
        for pass in 0..EMBED_PASSES {
            modified.data.copy_from_slice(&base.data);
            for ((&cell, &b), &m) in layout.cells.iter().zip(&layout.bit).zip(&layout.sign) {
                let g = 1.0 + gains[b] * m * polar[b];
                modified.data[cell] = base.data[cell] * g;
            }
            out = istft_complex(&modified, s.len(), self.params())?;
            if pass + 1 == EMBED_PASSES {
                break;
            }
            let probe = stft_complex(&out, self.params())?;
            let corr = layout.correlations(&probe);
            for b in 0..layout.n_bits {
                let deficit = target - polar[b] * corr[b];
                if deficit > 0.0 {
                    gains[b] = (gains[b] + deficit / GAIN_RESPONSE).min(MAX_GAIN);
                }
            }
        }
        Ok((modified, out))
    }

    /// Embedding with the strength scaled by `gain_db` (amplitude dB).
    pub fn embed_scaled(&self, s: &Waveform, w: &WatermarkBits, gain_db: f64) -> Result<Waveform> {
        let strength = self.cfg.embed_strength * 10f64.powf(gain_db / 20.0);
        if strength == 0.0 {
            self.carrier_bits(w)?;
            self.layout(self.params().frame_count(s.len()), s.sample_rate())?;
            return Ok(s.clone());
        }
        let (_, out) = self.embed_passes(s, w, strength)?;
        s.with_samples(out)
    }

    /// Loss and, when requested, its gradient with respect to the samples.
    fn loss_impl(
        &self,
        fwd: &Forward,
        len: usize,
        target: &LossTarget,
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        let k = self.cfg.sharpness;
        let n = fwd.corr.len();
        // dL/dc_i
        let mut dc = vec![0.0; n];
        let loss = match target {
            LossTarget::Bits(t) => {
                if t.len() != n {
                    return Err(Error::InvalidBits(format!(
                        "loss target has {} bits, scheme decodes {n}",
                        t.len()
                    )));
                }
                let mut l = 0.0;
                for i in 0..n {
                    let p_raw = sigmoid(k * fwd.corr[i]);
                    let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    let clamped = p != p_raw;
                    let ti = if t.get(i) { 1.0 } else { 0.0 };
                    l -= ti * p.ln() + (1.0 - ti) * (1.0 - p).ln();
                    if !clamped {
                        // d/dc of the cross-entropy through sigmoid(k c)
                        dc[i] = k * (p - ti);
                    }
                }
                l
            }
            LossTarget::ProbabilityAbove { tau } | LossTarget::ProbabilityBelow { tau } => {
                let mean_abs = fwd.corr.iter().map(|c| c.abs()).sum::<f64>() / n as f64;
                let ps = sigmoid(k * mean_abs);
                let (hinge, dir) = match target {
                    LossTarget::ProbabilityAbove { .. } => (ps - tau, 1.0),
                    _ => (tau - ps, -1.0),
                };
                if hinge <= 0.0 {
                    return Ok((0.0, want_grad.then(|| vec![0.0; len])));
                }
                let dps = dir * ps * (1.0 - ps) * k / n as f64;
                for i in 0..n {
                    dc[i] = dps * fwd.corr[i].signum();
                }
                hinge
            }
        };
        if !want_grad {
            return Ok((loss, None));
        }
        let layout = &fwd.layout;
        let inv = 1.0 / layout.cells_per_bit as f64;
        let mut g = ComplexFrames {
            data: vec![Complex64::new(0.0, 0.0); fwd.cf.data.len()],
            frames: fwd.cf.frames,
            bins: fwd.cf.bins,
        };
        for ((&cell, &b), &m) in layout.cells.iter().zip(&layout.bit).zip(&layout.sign) {
            let dl = dc[b] * m * inv;
            if dl == 0.0 {
                continue;
            }
            let z = fwd.cf.data[cell];
            // d/dz of 0.5 ln(|z|^2 + eps) is z / (|z|^2 + eps)
            g.data[cell] = z * (dl / (z.norm_sqr() + EPS));
        }
        let grad = stft_backward(&g, len, self.params())?;
        Ok((loss, Some(grad)))
    }
}

impl WatermarkScheme for ReferenceScheme {
    fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    fn embed(&self, s: &Waveform, w: &WatermarkBits) -> Result<Waveform> {
        self.embed_scaled(s, w, 0.0)
    }

    fn embed_with_gain(&self, s: &Waveform, w: &WatermarkBits, gain_db: f64) -> Result<Waveform> {
        self.embed_scaled(s, w, gain_db)
    }

    fn decode(&self, s: &Waveform, truth: Option<&WatermarkBits>) -> Result<DetectionOutcome> {
        let fwd = self.forward(s.samples(), s.sample_rate())?;
        self.outcome(&fwd.corr, truth)
    }

    fn differentiable(&self) -> Option<&dyn DifferentiableScheme> {
        Some(self)
    }
}

impl DifferentiableScheme for ReferenceScheme {
    fn carrier_target(&self, w: &WatermarkBits) -> Result<WatermarkBits> {
        self.carrier_bits(w)
    }

    fn loss(&self, s: &Waveform, target: &LossTarget) -> Result<f64> {
        let fwd = self.forward(s.samples(), s.sample_rate())?;
        Ok(self.loss_impl(&fwd, s.len(), target, false)?.0)
    }

    fn evaluate(
        &self,
        s: &Waveform,
        truth: Option<&WatermarkBits>,
        target: &LossTarget,
    ) -> Result<(DetectionOutcome, f64, Vec<f64>)> {
        let fwd = self.forward(s.samples(), s.sample_rate())?;
        let outcome = self.outcome(&fwd.corr, truth)?;
        let (loss, grad) = self.loss_impl(&fwd, s.len(), target, true)?;
        Ok((outcome, loss, grad.expect("gradient requested")))
    }
}
