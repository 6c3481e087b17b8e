use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DecisionRule, WatermarkBits};
use crate::audio::StftParams;
use crate::error::{Error, Result};
use crate::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Bitwise-accuracy detector over a spread-spectrum payload.
    SpreadSpectrum,
    /// Synchronization pattern plus payload; sync equality gates detection.
    SyncPayload,
    /// Global detection probability compared against the threshold.
    Probability,
    /// Subprocess-backed scheme.
    External,
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::SpreadSpectrum => "spread_spectrum",
            SchemeKind::SyncPayload => "sync_payload",
            SchemeKind::Probability => "probability",
            SchemeKind::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "spread_spectrum" | "ss" => Ok(SchemeKind::SpreadSpectrum),
            "sync_payload" | "sync" => Ok(SchemeKind::SyncPayload),
            "probability" | "prob" => Ok(SchemeKind::Probability),
            "external" => Ok(SchemeKind::External),
            other => Err(Error::InvalidConfig(format!("unknown scheme kind `{other}`"))),
        }
    }
}

/// Subprocess adapter settings for [`SchemeKind::External`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    /// Shell command; one JSON request line on stdin, one response line on stdout.
    pub command: String,
    pub rule: DecisionRule,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    60.0
}

impl ExternalSpec {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub name: String,
    pub kind: SchemeKind,
    /// Relative amplitude change on carrier cells.
    pub embed_strength: f64,
    pub payload_bits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync_bits: Option<WatermarkBits>,
    pub threshold: f64,
    /// Sigmoid sharpness for soft bits and the detection probability.
    pub sharpness: f64,
    pub seed: Seed,
    #[serde(default)]
    pub stft: StftParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalSpec>,
}

pub const DEFAULT_SYNC: &str = "11010010";

impl SchemeConfig {
    pub fn spread_spectrum(seed: Seed) -> Self {
        SchemeConfig {
            name: "spread_spectrum".into(),
            kind: SchemeKind::SpreadSpectrum,
            embed_strength: 0.1,
            payload_bits: 16,
            sync_bits: None,
            threshold: 0.8125,
            sharpness: 8.0,
            seed,
            stft: StftParams::default(),
            external: None,
        }
    }

    pub fn sync_payload(seed: Seed) -> Self {
        SchemeConfig {
            name: "sync_payload".into(),
            kind: SchemeKind::SyncPayload,
            sync_bits: Some(DEFAULT_SYNC.parse().expect("valid constant")),
            ..Self::spread_spectrum(seed)
        }
    }

    pub fn probability(seed: Seed) -> Self {
        SchemeConfig {
            name: "probability".into(),
            kind: SchemeKind::Probability,
            threshold: 0.6,
            ..Self::spread_spectrum(seed)
        }
    }

    pub fn external(name: &str, spec: ExternalSpec, payload_bits: usize, threshold: f64) -> Self {
        SchemeConfig {
            name: name.into(),
            kind: SchemeKind::External,
            embed_strength: 1.0,
            payload_bits,
            sync_bits: None,
            threshold,
            sharpness: 8.0,
            seed: Seed(0),
            stft: StftParams::default(),
            external: Some(spec),
        }
    }

    /// Default config for a built-in kind.
    pub fn builtin(kind: SchemeKind, seed: Seed) -> Result<Self> {
        match kind {
            SchemeKind::SpreadSpectrum => Ok(Self::spread_spectrum(seed)),
            SchemeKind::SyncPayload => Ok(Self::sync_payload(seed)),
            SchemeKind::Probability => Ok(Self::probability(seed)),
            SchemeKind::External => Err(Error::InvalidConfig(
                "external schemes need a command".into(),
            )),
        }
    }

    pub fn with_threshold(mut self, tau: f64) -> Self {
        self.threshold = tau;
        self
    }

    pub fn rule(&self) -> DecisionRule {
        match self.kind {
            SchemeKind::SpreadSpectrum => DecisionRule::BitwiseAccuracy,
            SchemeKind::SyncPayload => DecisionRule::SyncAndBitwiseAccuracy,
            SchemeKind::Probability => DecisionRule::Probability,
            SchemeKind::External => self
                .external
                .as_ref()
                .map(|e| e.rule)
                .unwrap_or(DecisionRule::BitwiseAccuracy),
        }
    }

    pub fn sync_len(&self) -> usize {
        match (self.kind, &self.sync_bits) {
            (SchemeKind::SyncPayload, Some(s)) => s.len(),
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != SchemeKind::External && !(self.embed_strength >= 0.0) {
            return Err(Error::InvalidConfig("embed strength must be >= 0".into()));
        }
        if self.payload_bits == 0 {
            return Err(Error::InvalidConfig("payload must have at least one bit".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !(self.sharpness > 0.0) {
            return Err(Error::InvalidConfig("sharpness must be positive".into()));
        }
        match self.kind {
            SchemeKind::SyncPayload => match &self.sync_bits {
                Some(s) if s.len() >= 8 => {}
                _ => {
                    return Err(Error::InvalidConfig(
                        "sync payload scheme needs at least 8 sync bits".into(),
                    ))
                }
            },
            SchemeKind::External if self.external.is_none() => {
                return Err(Error::InvalidConfig("external scheme without a command".into()))
            }
            _ => {}
        }
        self.stft.validate()
    }
}
