//! ℓ∞ Square attack on the STFT amplitude matrix, phase held fixed.

use rand::Rng;

use super::{Counted, Oracle, OracleAnswer, OracleBudget};
use crate::attack::{AttackGoal, AttackResult, TracePoint};
use crate::audio::{istft_complex, polar, stft_complex, ComplexFrames, StftParams, Waveform};
use crate::error::{Error, Result};
use crate::Seed;

/// Initial fraction of the amplitude matrix covered by one square.
pub const SQUARE_P_INIT: f64 = 0.05;

/// Square-area fraction at iteration `it` of `n_iters`: the published
/// piecewise schedule, stretched to the run length.
pub fn p_selection(p_init: f64, it: usize, n_iters: usize) -> f64 {
    let i = (it as f64 / n_iters.max(1) as f64 * 10_000.0) as usize;
    let div = match i {
        0..=10 => 1.0,
        11..=50 => 2.0,
        51..=200 => 4.0,
        201..=500 => 8.0,
        501..=1000 => 16.0,
        1001..=2000 => 32.0,
        2001..=4000 => 64.0,
        4001..=6000 => 128.0,
        6001..=8000 => 256.0,
        _ => 512.0,
    };
    p_init / div
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareOutcome {
    pub result: AttackResult,
    /// `max |perturbed amplitude - original amplitude|` after the
    /// initialization and after every accepted proposal.
    pub accepted_linf: Vec<f64>,
    pub accepted: usize,
}

struct State {
    amp0: Vec<f64>,
    phase: Vec<f64>,
    frames: usize,
    bins: usize,
    params: StftParams,
}

impl State {
    fn perturbed_amplitude(&self, delta: &[f64]) -> Vec<f64> {
        self.amp0.iter().zip(delta).map(|(&a, &d)| shift(a, d)).collect()
    }

    fn synth(&self, s: &Waveform, amp: &[f64]) -> Result<Waveform> {
        let data = polar(amp, &self.phase);
        let cf = ComplexFrames {
            data,
            frames: self.frames,
            bins: self.bins,
        };
        s.with_samples(istft_complex(&cf, s.len(), &self.params)?)
    }

    fn linf(&self, amp: &[f64]) -> f64 {
        self.amp0
            .iter()
            .zip(amp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `max(a + d, 0)`, pulled back by an ulp where rounding would put it
/// further than `|d|` from `a`.
fn shift(a: f64, d: f64) -> f64 {
    let mut v = (a + d).max(0.0);
    while (v - a).abs() > d.abs() {
        v = if v > a {
            f64::from_bits(v.to_bits() - 1)
        } else {
            f64::from_bits(v.to_bits() + 1)
        };
    }
    v
}

/// Random search over ±`linf_bound` amplitude patches.
///
/// The oracle's score is bitwise accuracy (or `P_s`); removal accepts a
/// proposal only if it strictly lowers the score, forgery only if it
/// strictly raises it. Stops once the decision matches the goal.
pub fn square_attack(
    oracle: &mut dyn Oracle,
    s: &Waveform,
    goal: AttackGoal,
    linf_bound: f64,
    budget: &OracleBudget,
    seed: Seed,
) -> Result<SquareOutcome> {
    budget.validate()?;
    if !(linf_bound >= 0.0) || !linf_bound.is_finite() {
        return Err(Error::InvalidConfig(format!("invalid ℓ∞ bound {linf_bound}")));
    }
    let mut oracle = Counted::new(oracle, budget.max_queries);
    if linf_bound == 0.0 {
        let ans = oracle.query(s)?;
        let trace = vec![TracePoint {
            iteration: 0,
            value: ans.score,
        }];
        let result = AttackResult::finish(s, s.clone(), goal.reached(ans.decision), oracle.used(), trace)?;
        return Ok(SquareOutcome {
            result,
            accepted_linf: vec![0.0],
            accepted: 0,
        });
    }

    let params = StftParams::default();
    let cf = stft_complex(s.samples(), &params)?;
    let state = State {
        amp0: cf.data.iter().map(|z| z.norm()).collect(),
        phase: cf.data.iter().map(|z| z.arg()).collect(),
        frames: cf.frames,
        bins: cf.bins,
        params,
    };
    let (frames, bins) = (state.frames, state.bins);
    let mut rng = seed.derive("square").rng();

    // vertical stripes: one sign per frame across every bin
    let mut delta = vec![0.0; frames * bins];
    for f in 0..frames {
        let v = if rng.random::<bool>() { linf_bound } else { -linf_bound };
        delta[f * bins..(f + 1) * bins].fill(v);
    }
    let mut amp = state.perturbed_amplitude(&delta);
    let mut best_wave = state.synth(s, &amp)?;
    let mut best: OracleAnswer = oracle.query(&best_wave)?;
    let mut accepted_linf = vec![state.linf(&amp)];
    let mut accepted = 0;
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: best.score,
    }];

    let mut it = 0;
    while !goal.reached(best.decision) && it < budget.max_iterations {
        it += 1;
        let p = p_selection(SQUARE_P_INIT, it - 1, budget.max_iterations);
        let side = ((p * (frames * bins) as f64).sqrt().round() as usize).clamp(1, frames.min(bins));
        let f0 = rng.random_range(0..=frames - side);
        let k0 = rng.random_range(0..=bins - side);
        let mut v = if rng.random::<bool>() { linf_bound } else { -linf_bound };
        let uniform = (f0..f0 + side).all(|f| delta[f * bins + k0..f * bins + k0 + side].iter().all(|&d| d == v));
        if uniform {
            v = -v;
        }
        let mut proposal = delta.clone();
        for f in f0..f0 + side {
            proposal[f * bins + k0..f * bins + k0 + side].fill(v);
        }
        let cand_amp = state.perturbed_amplitude(&proposal);
        let wave = state.synth(s, &cand_amp)?;
        let ans = match oracle.query(&wave) {
            Ok(a) => a,
            Err(Error::BudgetExhausted(_)) => break,
            Err(e) => return Err(e),
        };
        if goal.improves(ans.score, best.score) {
            delta = proposal;
            amp = cand_amp;
            best = ans;
            best_wave = wave;
            accepted += 1;
            accepted_linf.push(state.linf(&amp));
        }
        trace.push(TracePoint {
            iteration: it,
            value: best.score,
        });
    }

    let result = AttackResult::finish(s, best_wave, goal.reached(best.decision), oracle.used(), trace)?;
    Ok(SquareOutcome {
        result,
        accepted_linf,
        accepted,
    })
}
