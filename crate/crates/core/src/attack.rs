//! Types shared by the black-box and white-box attacks.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::Result;
use crate::metrics::{quality_proxy, snr, QualityScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackGoal {
    /// Make a watermarked clip read as unwatermarked.
    Removal,
    /// Make an unwatermarked clip read as watermarked.
    Forgery,
}

impl AttackGoal {
    /// The detector decision the attacker wants.
    pub fn target_decision(&self) -> bool {
        matches!(self, AttackGoal::Forgery)
    }

    pub fn reached(&self, decision: bool) -> bool {
        decision == self.target_decision()
    }

    /// Whether score `a` is strictly better than `b` for this goal.
    pub fn improves(&self, a: f64, b: f64) -> bool {
        match self {
            AttackGoal::Removal => a < b,
            AttackGoal::Forgery => a > b,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AttackGoal::Removal => "removal",
            AttackGoal::Forgery => "forgery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Best-so-far SNR (dB) or detector score, depending on the attack.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub perturbed: Waveform,
    pub success: bool,
    pub queries_used: usize,
    pub final_snr: f64,
    pub final_quality: QualityScore,
    pub trace: Vec<TracePoint>,
}

impl AttackResult {
    pub(crate) fn finish(
        original: &Waveform,
        perturbed: Waveform,
        success: bool,
        queries_used: usize,
        trace: Vec<TracePoint>,
    ) -> Result<Self> {
        let final_snr = snr(original, &perturbed)?;
        let final_quality = quality_proxy(original, &perturbed)?;
        Ok(AttackResult {
            perturbed,
            success,
            queries_used,
            final_snr,
            final_quality,
            trace,
        })
    }
}
