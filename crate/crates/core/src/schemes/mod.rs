//! Watermark scheme abstraction: embed, decode, detect.

mod bits;
mod calibrate;
mod config;
mod external;
mod reference;

pub use bits::WatermarkBits;
pub use calibrate::{
    calibrate_outcomes, calibrate_threshold, default_grid, CalibrationCurve, CurvePoint, TARGET_RATE,
};
pub use config::{ExternalSpec, SchemeConfig, SchemeKind, DEFAULT_SYNC};
pub use external::{scheme_env_var, ExternalScheme};
pub use reference::{CarrierLayout, ReferenceScheme, BAND_HIGH_HZ, BAND_LOW_HZ};

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// How a detector turns a decoded outcome into a binary decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// `BA(Dec(s), w) >= tau`.
    BitwiseAccuracy,
    /// Decoded sync equals the preset pattern and `BA >= tau`.
    SyncAndBitwiseAccuracy,
    /// `P_s > tau`.
    Probability,
}

impl DecisionRule {
    pub fn decide(&self, outcome: &DetectionOutcome, tau: f64) -> bool {
        let Some(score) = outcome.score else {
            return false;
        };
        match self {
            DecisionRule::BitwiseAccuracy => score >= tau,
            DecisionRule::SyncAndBitwiseAccuracy => {
                outcome.sync_matched.unwrap_or(false) && score >= tau
            }
            DecisionRule::Probability => score > tau,
        }
    }

    pub fn is_probability(&self) -> bool {
        matches!(self, DecisionRule::Probability)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutcome {
    /// Every decoded carrier bit (sync pattern first, if any).
    pub decoded: WatermarkBits,
    pub soft_bits: Vec<f64>,
    /// Bitwise accuracy against the supplied ground truth, or `P_s`.
    /// `None` for accuracy-based detectors decoded without ground truth.
    pub score: Option<f64>,
    pub decision: bool,
    pub sync_matched: Option<bool>,
    /// Index of the first payload bit in `decoded`.
    pub payload_offset: usize,
}

impl DetectionOutcome {
    pub fn payload(&self) -> WatermarkBits {
        if self.payload_offset == 0 {
            return self.decoded.clone();
        }
        self.decoded
            .slice(self.payload_offset, self.decoded.len())
            .expect("payload follows the sync pattern")
    }
}

/// Loss selector for white-box gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum LossTarget {
    /// Binary cross-entropy of the soft bits against these carrier bits.
    Bits(WatermarkBits),
    /// `max(0, P_s - tau)`: pushes the detection probability down.
    ProbabilityAbove { tau: f64 },
    /// `max(0, tau - P_s)`: pushes the detection probability up.
    ProbabilityBelow { tau: f64 },
}

pub trait WatermarkScheme: Send + Sync {
    fn config(&self) -> &SchemeConfig;

    fn name(&self) -> &str {
        &self.config().name
    }

    fn rule(&self) -> DecisionRule {
        self.config().rule()
    }

    fn threshold(&self) -> f64 {
        self.config().threshold
    }

    fn payload_bits(&self) -> usize {
        self.config().payload_bits
    }

    fn embed(&self, s: &Waveform, w: &WatermarkBits) -> Result<Waveform>;

    /// Embedding with the strength offset by `gain_db`.
    fn embed_with_gain(&self, s: &Waveform, w: &WatermarkBits, gain_db: f64) -> Result<Waveform> {
        if gain_db == 0.0 {
            self.embed(s, w)
        } else {
            Err(Error::InvalidConfig(format!(
                "scheme `{}` has no adjustable strength",
                self.name()
            )))
        }
    }

    fn decode(&self, s: &Waveform, truth: Option<&WatermarkBits>) -> Result<DetectionOutcome>;

    fn detect(&self, s: &Waveform, w: &WatermarkBits) -> Result<bool> {
        Ok(self.decode(s, Some(w))?.decision)
    }

    /// Analytic gradients, when the scheme exposes them.
    fn differentiable(&self) -> Option<&dyn DifferentiableScheme> {
        None
    }
}

pub trait DifferentiableScheme: WatermarkScheme {
    /// The bitstring the decoder actually reads for payload `w`.
    fn carrier_target(&self, w: &WatermarkBits) -> Result<WatermarkBits>;

    fn loss(&self, s: &Waveform, target: &LossTarget) -> Result<f64>;

    /// Decoder outcome, loss and `dL/ds` at `s` from a single analysis.
    fn evaluate(
        &self,
        s: &Waveform,
        truth: Option<&WatermarkBits>,
        target: &LossTarget,
    ) -> Result<(DetectionOutcome, f64, Vec<f64>)>;

    fn gradient(&self, s: &Waveform, target: &LossTarget) -> Result<Vec<f64>> {
        Ok(self.evaluate(s, None, target)?.2)
    }
}

/// Instantiate the scheme a config describes.
pub fn build_scheme(cfg: &SchemeConfig) -> Result<Box<dyn WatermarkScheme>> {
    match cfg.kind {
        SchemeKind::External => Ok(Box::new(ExternalScheme::new(cfg.clone())?)),
        _ => Ok(Box::new(ReferenceScheme::new(cfg.clone())?)),
    }
}

pub fn embed(s: &Waveform, w: &WatermarkBits, cfg: &SchemeConfig) -> Result<Waveform> {
    build_scheme(cfg)?.embed(s, w)
}

pub fn decode(
    s: &Waveform,
    truth: Option<&WatermarkBits>,
    cfg: &SchemeConfig,
) -> Result<DetectionOutcome> {
    build_scheme(cfg)?.decode(s, truth)
}

pub fn detect(s: &Waveform, w: &WatermarkBits, cfg: &SchemeConfig) -> Result<bool> {
    build_scheme(cfg)?.detect(s, w)
}

/// `dL/ds` for a built-in scheme.
pub fn gradient(s: &Waveform, target: &LossTarget, cfg: &SchemeConfig) -> Result<Vec<f64>> {
    if cfg.kind == SchemeKind::External {
        return Err(Error::GradientUnavailable(cfg.name.clone()));
    }
    ReferenceScheme::new(cfg.clone())?.gradient(s, target)
}
