//! Gradient-based removal and forgery under an SNR budget.

use serde::{Deserialize, Serialize};

use crate::attack::{AttackGoal, AttackResult, TracePoint};
use crate::audio::{mean_power, Waveform};
use crate::error::{Error, Result};
use crate::metrics::snr_of_delta;
use crate::schemes::{DecisionRule, DifferentiableScheme, LossTarget, WatermarkBits, WatermarkScheme};

/// How far past the threshold probability forgery aims, so the strict
/// `P_s > tau` rule is met rather than approached.
pub const FORGERY_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteboxVariant {
    /// `delta -= lr * grad`.
    GradientDescent,
    /// `delta -= lr * sign(grad)`.
    Ifgsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// `r = 10^((R - snr) / 10)`, overshooting to `SNR = 2R - snr`.
    PaperPower,
    /// `r = 10^((R - snr) / 20)`, landing exactly on `SNR = R`.
    AmplitudeExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxConfig {
    pub snr_budget: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub variant: WhiteboxVariant,
    pub rescale_mode: RescaleMode,
}

impl Default for WhiteboxConfig {
    fn default() -> Self {
        WhiteboxConfig {
            snr_budget: 20.0,
            iterations: 1000,
            learning_rate: 0.001,
            variant: WhiteboxVariant::GradientDescent,
            rescale_mode: RescaleMode::AmplitudeExact,
        }
    }
}

impl WhiteboxConfig {
    pub fn with_budget(mut self, snr_budget: f64) -> Self {
        self.snr_budget = snr_budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_budget.is_finite() {
            return Err(Error::InvalidConfig("SNR budget must be finite".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Divisor `r` for `delta` so that `snr(s, s + delta / r)` meets `snr_budget`.
/// `1` when the constraint already holds.
pub fn scaling_factor(s: &[f64], delta: &[f64], snr_budget: f64, mode: RescaleMode) -> Result<f64> {
    if s.len() != delta.len() {
        return Err(Error::Shape(format!(
            "signal has {} samples, perturbation {}",
            s.len(),
            delta.len()
        )));
    }
    let snr = snr_of_delta(s, delta)?;
    if snr >= snr_budget {
        return Ok(1.0);
    }
    let exponent = match mode {
        RescaleMode::PaperPower => 10.0,
        RescaleMode::AmplitudeExact => 20.0,
    };
    Ok(10f64.powf((snr_budget - snr) / exponent))
}

/// `L_Re` for probability detectors, `L_ce` against `target` otherwise.
pub fn whitebox_loss(
    s: &Waveform,
    target: &WatermarkBits,
    goal: AttackGoal,
    scheme: &dyn WatermarkScheme,
) -> Result<f64> {
    let ds = differentiable(scheme)?;
    ds.loss(s, &loss_target(ds, goal, target)?)
}

fn differentiable(scheme: &dyn WatermarkScheme) -> Result<&dyn DifferentiableScheme> {
    scheme
        .differentiable()
        .ok_or_else(|| Error::GradientUnavailable(scheme.name().into()))
}

/// The loss the attack descends. For removal `bits` is the embedded
/// watermark; for forgery it is the watermark to forge.
fn loss_target(ds: &dyn DifferentiableScheme, goal: AttackGoal, bits: &WatermarkBits) -> Result<LossTarget> {
    let tau = ds.threshold();
    Ok(match (ds.rule(), goal) {
        (DecisionRule::Probability, AttackGoal::Removal) => LossTarget::ProbabilityAbove { tau },
        (DecisionRule::Probability, AttackGoal::Forgery) => LossTarget::ProbabilityBelow {
            tau: (tau + FORGERY_MARGIN).min(1.0),
        },
        // complement of every carrier bit, sync pattern included
        (_, AttackGoal::Removal) => LossTarget::Bits(ds.carrier_target(bits)?.complement()),
        (_, AttackGoal::Forgery) => LossTarget::Bits(ds.carrier_target(bits)?),
    })
}

pub fn whitebox_remove(
    s_w: &Waveform,
    w: &WatermarkBits,
    scheme: &dyn WatermarkScheme,
    cfg: &WhiteboxConfig,
) -> Result<AttackResult> {
    run(s_w, w, AttackGoal::Removal, scheme, cfg)
}

pub fn whitebox_forge(
    s_u: &Waveform,
    w_f: &WatermarkBits,
    scheme: &dyn WatermarkScheme,
    cfg: &WhiteboxConfig,
) -> Result<AttackResult> {
    run(s_u, w_f, AttackGoal::Forgery, scheme, cfg)
}

/// Sign-gradient variant of [`whitebox_remove`] / [`whitebox_forge`].
pub fn ifgsm(
    s: &Waveform,
    bits: &WatermarkBits,
    goal: AttackGoal,
    scheme: &dyn WatermarkScheme,
    cfg: &WhiteboxConfig,
) -> Result<AttackResult> {
    let cfg = WhiteboxConfig {
        variant: WhiteboxVariant::Ifgsm,
        ..*cfg
    };
    run(s, bits, goal, scheme, &cfg)
}

/// Shared loop. `bits` is the ground truth for removal and the forged
/// watermark for forgery; in both cases the detector's score is measured
/// against it.
fn run(
    s: &Waveform,
    bits: &WatermarkBits,
    goal: AttackGoal,
    scheme: &dyn WatermarkScheme,
    cfg: &WhiteboxConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let ds = differentiable(scheme)?;
    let target = loss_target(ds, goal, bits)?;
    let x = s.samples();
    if mean_power(x) == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let n = x.len();
    let mut delta = vec![0.0; n];
    let mut best_delta = delta.clone();
    let mut best_q = f64::NAN;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut queries = 0;
    let mut success = false;
    let mut candidate: Vec<f64> = x.to_vec();

    for it in 0..=cfg.iterations {
        for i in 0..n {
            candidate[i] = x[i] + delta[i];
        }
        let current = s.with_samples(candidate.clone())?;
        let (outcome, _loss, grad) = ds.evaluate(&current, Some(bits), &target)?;
        queries += 1;
        let q = outcome.score.unwrap_or(0.0);
        if best_q.is_nan() || goal.improves(q, best_q) {
            best_q = q;
            best_delta.copy_from_slice(&delta);
        }
        trace.push(TracePoint {
            iteration: it,
            value: best_q,
        });
        if goal.reached(outcome.decision) {
            success = true;
            best_delta.copy_from_slice(&delta);
            break;
        }
        if it == cfg.iterations {
            break;
        }
        for (d, g) in delta.iter_mut().zip(&grad) {
            let step = match cfg.variant {
                WhiteboxVariant::GradientDescent => *g,
                WhiteboxVariant::Ifgsm => sign(*g),
            };
            *d -= cfg.learning_rate * step;
        }
        let r = scaling_factor(x, &delta, cfg.snr_budget, cfg.rescale_mode)?;
        if r > 1.0 {
            delta.iter_mut().for_each(|d| *d /= r);
        }
    }

    // one more exact projection guards the returned perturbation
    let r = scaling_factor(x, &best_delta, cfg.snr_budget, RescaleMode::AmplitudeExact)?;
    if r > 1.0 {
        best_delta.iter_mut().for_each(|d| *d /= r);
        let check = s.add(&best_delta)?;
        success = goal.reached(scheme.decode(&check, Some(bits))?.decision);
        queries += 1;
    }
    let perturbed = s.add(&best_delta)?;
    AttackResult::finish(s, perturbed, success, queries, trace)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
