//! HopSkipJump: boundary bisection, Monte-Carlo gradient direction,
//! geometric step search.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Counted, Oracle, OracleBudget};
use crate::attack::{AttackGoal, AttackResult, TracePoint};
use crate::audio::{istft_complex, polar, stft_complex, ComplexFrames, StftParams, Waveform};
use crate::error::{Error, Result};
use crate::metrics::snr;
use crate::perturbations::scale_to_snr;
use crate::Seed;

/// Decision-flip bisection steps per iteration.
pub const BISECTION_STEPS: usize = 25;
/// Step-size halvings before falling back to the boundary point.
pub const MAX_STEP_HALVINGS: usize = 25;
/// Gaussian-noise SNRs tried, highest first, for the initial adversarial point.
pub const INIT_LADDER_DB: [f64; 9] = [40.0, 35.0, 30.0, 25.0, 20.0, 15.0, 10.0, 5.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsjaDomain {
    /// The state is the sample vector.
    Waveform,
    /// The state is the STFT amplitude and phase, flattened.
    Spectrogram,
}

impl HsjaDomain {
    pub fn label(&self) -> &'static str {
        match self {
            HsjaDomain::Waveform => "waveform",
            HsjaDomain::Spectrogram => "spectrogram",
        }
    }
}

/// Maps between attack states and waveforms.
struct Space<'a> {
    domain: HsjaDomain,
    s: &'a Waveform,
    params: StftParams,
}

impl Space<'_> {
    fn encode(&self, samples: &[f64]) -> Result<Vec<f64>> {
        match self.domain {
            HsjaDomain::Waveform => Ok(samples.to_vec()),
            HsjaDomain::Spectrogram => {
                let cf = stft_complex(samples, &self.params)?;
                let mut x: Vec<f64> = cf.data.iter().map(|z| z.norm()).collect();
                x.extend(cf.data.iter().map(|z| z.arg()));
                Ok(x)
            }
        }
    }

    fn synth(&self, x: &[f64]) -> Result<Waveform> {
        match self.domain {
            HsjaDomain::Waveform => self.s.with_samples(x.to_vec()),
            HsjaDomain::Spectrogram => {
                let n = x.len() / 2;
                let (amp, phase) = x.split_at(n);
                let data = polar(amp, phase);
                let bins = self.params.bins();
                let cf = ComplexFrames {
                    data,
                    frames: n / bins,
                    bins,
                };
                self.s.with_samples(istft_complex(&cf, self.s.len(), &self.params)?)
            }
        }
    }
}

struct Search<'a, 'o> {
    space: Space<'a>,
    oracle: Counted<'o>,
    goal: AttackGoal,
    best: Option<(Waveform, f64)>,
}

impl Search<'_, '_> {
    /// Query the waveform a state synthesizes to; adversarial ones update
    /// the best-SNR point.
    fn adversarial(&mut self, x: &[f64]) -> Result<bool> {
        let w = self.space.synth(x)?;
        let hit = self.goal.reached(self.oracle.query(&w)?.decision);
        if hit {
            let q = snr(self.space.s, &w)?;
            if self.best.as_ref().is_none_or(|(_, b)| q > *b) {
                self.best = Some((w, q));
            }
        }
        Ok(hit)
    }

    fn best_snr(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |(_, q)| *q)
    }
}

fn blend(x0: &[f64], x1: &[f64], t: f64) -> Vec<f64> {
    x0.iter().zip(x1).map(|(a, b)| a + t * (b - a)).collect()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// HopSkipJump against a decision oracle.
///
/// Removal seeks a clip the oracle calls unwatermarked, forgery one it
/// calls watermarked. The returned clip is the highest-SNR adversarial
/// point seen, confirmed by one last query. Running out of queries
/// returns that point; only a failed initialization is an error.
pub fn hsja(
    oracle: &mut dyn Oracle,
    s: &Waveform,
    goal: AttackGoal,
    domain: HsjaDomain,
    budget: &OracleBudget,
    seed: Seed,
) -> Result<AttackResult> {
    budget.validate()?;
    // one query is held back for the final confirmation
    let mut oracle = Counted::new(oracle, budget.max_queries.saturating_sub(1).max(1));
    if goal.reached(oracle.query(s)?.decision) {
        let trace = vec![TracePoint {
            iteration: 0,
            value: f64::INFINITY,
        }];
        return AttackResult::finish(s, s.clone(), true, oracle.used(), trace);
    }
    let mut search = Search {
        space: Space {
            domain,
            s,
            params: StftParams::default(),
        },
        oracle,
        goal,
        best: None,
    };
    let x0 = search.space.encode(s.samples())?;
    let mut trace = Vec::new();

    let mut x_adv = None;
    let init_seed = seed.derive("hsja-init");
    for (k, &level) in INIT_LADDER_DB.iter().enumerate() {
        let mut rng = init_seed.derive_index(k as u64).rng();
        let noise: Vec<f64> = (0..s.len()).map(|_| rng.sample(StandardNormal)).collect();
        let x = search.space.encode(&scale_to_snr(s.samples(), &noise, level)?)?;
        match search.adversarial(&x) {
            Ok(true) => {
                x_adv = Some(x);
                break;
            }
            Ok(false) => {}
            Err(Error::BudgetExhausted(_)) => break,
            Err(e) => return Err(e),
        }
    }
    let Some(mut x_adv) = x_adv else {
        return Err(Error::InitializationFailed);
    };
    trace.push(TracePoint {
        iteration: 0,
        value: search.best_snr(),
    });

    let d = x0.len() as f64;
    let mut rng = seed.derive("hsja").rng();
    for t in 1..=budget.max_iterations {
        match iterate(&mut search, &x0, &mut x_adv, t, d, budget, &mut rng) {
            Ok(()) => {}
            Err(Error::BudgetExhausted(_)) => break,
            Err(e) => return Err(e),
        }
        trace.push(TracePoint {
            iteration: t,
            value: search.best_snr(),
        });
    }

    let (best, _) = search.best.take().expect("initializer is adversarial");
    search.oracle.raise_limit(budget.max_queries);
    let success = goal.reached(search.oracle.query(&best)?.decision);
    AttackResult::finish(s, best, success, search.oracle.used(), trace)
}

fn iterate(
    search: &mut Search,
    x0: &[f64],
    x_adv: &mut Vec<f64>,
    t: usize,
    d: f64,
    budget: &OracleBudget,
    rng: &mut impl Rng,
) -> Result<()> {
    // boundary point on the segment x0 -> x_adv
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if search.adversarial(&blend(x0, x_adv, mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi < 1.0 {
        *x_adv = blend(x0, x_adv, hi);
    }
    let xb = x_adv.clone();
    let dist = l2(&xb, x0);
    if dist == 0.0 {
        return Ok(());
    }

    // gradient direction from sign probes around the boundary point
    let probe = dist / d;
    let batch = budget.batch_size(t);
    let mut dirs = Vec::with_capacity(batch);
    let mut signs = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut u: Vec<f64> = (0..xb.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let x: Vec<f64> = xb.iter().zip(&u).map(|(a, b)| a + probe * b).collect();
        signs.push(if search.adversarial(&x)? { 1.0 } else { -1.0 });
        dirs.push(u);
    }
    let mean = signs.iter().sum::<f64>() / batch as f64;
    let baseline = if mean.abs() == 1.0 { 0.0 } else { mean };
    let mut grad = vec![0.0; xb.len()];
    for (u, s) in dirs.iter().zip(&signs) {
        let c = s - baseline;
        grad.iter_mut().zip(u).for_each(|(g, v)| *g += c * v);
    }
    let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm == 0.0 {
        return Ok(());
    }
    grad.iter_mut().for_each(|v| *v /= gnorm);

    // geometric step search away from the boundary
    let mut eps = dist / (t as f64).sqrt();
    for _ in 0..MAX_STEP_HALVINGS {
        let x: Vec<f64> = xb.iter().zip(&grad).map(|(a, g)| a + eps * g).collect();
        if search.adversarial(&x)? {
            *x_adv = x;
            break;
        }
        eps /= 2.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{speech_like, SynthVoice};
    use crate::blackbox::OracleAnswer;

    fn clip() -> Waveform {
        speech_like(Seed(4), SynthVoice::random(Seed(5)), 0.25, 16000).unwrap()
    }

    fn answer(decision: bool) -> Result<OracleAnswer> {
        Ok(OracleAnswer {
            score: decision as u8 as f64,
            decision,
        })
    }

    #[test]
    fn already_adversarial_returns_input() {
        let s = clip();
        let mut never = |_: &Waveform| answer(false);
        let r = hsja(
            &mut never,
            &s,
            AttackGoal::Removal,
            HsjaDomain::Spectrogram,
            &OracleBudget::default(),
            Seed(1),
        )
        .unwrap();
        assert!(r.success);
        assert_eq!(r.perturbed, s);
        assert_eq!(r.final_snr, f64::INFINITY);
        assert_eq!(r.queries_used, 1);
    }

    #[test]
    fn no_initializer_is_an_error() {
        let s = clip();
        let mut always = |_: &Waveform| answer(true);
        let r = hsja(
            &mut always,
            &s,
            AttackGoal::Removal,
            HsjaDomain::Waveform,
            &OracleBudget::default(),
            Seed(1),
        );
        assert!(matches!(r, Err(Error::InitializationFailed)));
    }

    /// Detector that fires while the clip's cosine similarity to `s`
    /// exceeds 0.9. The closest non-firing clip sits at
    /// `-20 log10(sqrt(1 - 0.81))` = 7.21 dB.
    fn cosine_oracle(s: &Waveform) -> impl FnMut(&Waveform) -> Result<OracleAnswer> {
        let dir: Vec<f64> = s.samples().to_vec();
        let nd = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        move |w: &Waveform| {
            let dot: f64 = w.samples().iter().zip(&dir).map(|(a, b)| a * b).sum();
            let nw = w.samples().iter().map(|v| v * v).sum::<f64>().sqrt();
            answer(dot / (nw * nd) > 0.9)
        }
    }

    fn run(domain: HsjaDomain, iterations: usize) -> (AttackResult, usize) {
        let s = clip();
        let mut calls = 0;
        let mut inner = cosine_oracle(&s);
        let mut o = |w: &Waveform| {
            calls += 1;
            inner(w)
        };
        let budget = OracleBudget {
            max_iterations: iterations,
            max_queries: 100_000,
            grad_est_init: 10,
            grad_est_cap: 20,
        };
        let r = hsja(&mut o, &s, AttackGoal::Removal, domain, &budget, Seed(2)).unwrap();
        (r, calls)
    }

    #[test]
    fn progress_toward_a_known_optimum() {
        for domain in [HsjaDomain::Waveform, HsjaDomain::Spectrogram] {
            let (r, calls) = run(domain, 30);
            assert!(r.success);
            assert_eq!(r.queries_used, calls);
            let values: Vec<f64> = r.trace.iter().map(|p| p.value).collect();
            assert!(values.windows(2).all(|w| w[1] >= w[0]));
            assert!((values[0] - 5.0).abs() < 1e-9, "{values:?}");
            assert!(values[values.len() - 1] > 6.0, "{values:?}");
            assert!(r.final_snr <= 7.22, "{}", r.final_snr);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (a, _) = run(HsjaDomain::Spectrogram, 5);
        let (b, _) = run(HsjaDomain::Spectrogram, 5);
        assert_eq!(a.perturbed, b.perturbed);
        assert_eq!(a.queries_used, b.queries_used);
    }

    #[test]
    fn query_budget_is_never_exceeded() {
        let s = clip();
        for max_queries in [20, 40, 97] {
            let mut calls = 0;
            let mut inner = cosine_oracle(&s);
            let mut o = |w: &Waveform| {
                calls += 1;
                inner(w)
            };
            let budget = OracleBudget {
                max_iterations: 1000,
                max_queries,
                grad_est_init: 10,
                grad_est_cap: 20,
            };
            let r = hsja(&mut o, &s, AttackGoal::Removal, HsjaDomain::Waveform, &budget, Seed(3)).unwrap();
            assert!(r.queries_used <= max_queries);
            assert_eq!(r.queries_used, calls);
            assert!(r.success);
        }
    }
}
