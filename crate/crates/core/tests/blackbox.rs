use audiomark_core::attack::AttackGoal;
use audiomark_core::audio::{speech_like, stft_complex, StftParams, SynthVoice, Waveform};
use audiomark_core::blackbox::{
    hsja, square_attack, HsjaDomain, Oracle, OracleAnswer, OracleBudget, SchemeOracle,
};
use audiomark_core::schemes::{build_scheme, SchemeConfig, WatermarkBits, WatermarkScheme};
use audiomark_core::{Result, Seed};
use proptest::prelude::*;

fn clip(i: u64, secs: f64) -> Waveform {
    let seed = Seed(900).derive_index(i);
    speech_like(seed, SynthVoice::random(seed.derive("voice")), secs, 16000).unwrap()
}

/// Counts calls independently of the attack's own bookkeeping.
struct Tally<O> {
    inner: O,
    calls: usize,
}

impl<O: Oracle> Oracle for Tally<O> {
    fn query(&mut self, s: &Waveform) -> Result<OracleAnswer> {
        self.calls += 1;
        self.inner.query(s)
    }
}

fn watermarked(scheme: &dyn WatermarkScheme, i: u64, secs: f64) -> (Waveform, WatermarkBits) {
    let w = WatermarkBits::random(scheme.payload_bits(), Seed(i).derive("w")).unwrap();
    (scheme.embed(&clip(i, secs), &w).unwrap(), w)
}

#[test]
fn hsja_successes_reverify_and_trace_is_monotone() {
    let scheme = build_scheme(&SchemeConfig::spread_spectrum(Seed(3))).unwrap();
    let budget = OracleBudget {
        max_iterations: 15,
        max_queries: 100_000,
        grad_est_init: 5,
        grad_est_cap: 10,
    };
    for domain in [HsjaDomain::Waveform, HsjaDomain::Spectrogram] {
        for i in 0..2 {
            let (sw, w) = watermarked(scheme.as_ref(), i, 0.25);
            let mut o = Tally {
                inner: SchemeOracle::new(scheme.as_ref(), w.clone()),
                calls: 0,
            };
            let r = hsja(&mut o, &sw, AttackGoal::Removal, domain, &budget, Seed(i)).unwrap();
            assert!(r.success);
            assert!(!scheme.detect(&r.perturbed, &w).unwrap());
            assert_eq!(r.queries_used, o.calls);
            let v: Vec<f64> = r.trace.iter().map(|t| t.value).collect();
            assert!(v.windows(2).all(|p| p[1] >= p[0]), "{v:?}");
            assert!((r.final_snr - v[v.len() - 1]).abs() < 1e-9);
        }
    }
}

#[test]
fn hsja_is_deterministic() {
    let scheme = build_scheme(&SchemeConfig::probability(Seed(3))).unwrap();
    let (sw, w) = watermarked(scheme.as_ref(), 5, 0.25);
    let budget = OracleBudget {
        max_iterations: 5,
        max_queries: 10_000,
        grad_est_init: 4,
        grad_est_cap: 8,
    };
    let run = || {
        let mut o = SchemeOracle::new(scheme.as_ref(), w.clone());
        hsja(&mut o, &sw, AttackGoal::Removal, HsjaDomain::Spectrogram, &budget, Seed(8)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.perturbed, b.perturbed);
    assert_eq!(a.queries_used, b.queries_used);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn square_against_a_scheme_respects_bound_and_counts() {
    let scheme = build_scheme(&SchemeConfig::sync_payload(Seed(3))).unwrap();
    let (sw, w) = watermarked(scheme.as_ref(), 2, 0.5);
    let mut o = Tally {
        inner: SchemeOracle::new(scheme.as_ref(), w.clone()),
        calls: 0,
    };
    let budget = OracleBudget::default().with_iterations(300);
    let out = square_attack(&mut o, &sw, AttackGoal::Removal, 0.2, &budget, Seed(4)).unwrap();
    assert!(out.accepted_linf.iter().all(|&m| m <= 0.2));
    assert_eq!(out.result.queries_used, o.calls);
    let v: Vec<f64> = out.result.trace.iter().map(|t| t.value).collect();
    assert!(v.windows(2).all(|p| p[1] <= p[0]));
    assert_eq!(out.result.success, !scheme.detect(&out.result.perturbed, &w).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn square_never_exceeds_bound(bound in 0.001f64..2.0, seed in any::<u64>(), forge in any::<bool>()) {
        let s = clip(seed % 4, 0.125);
        let p = StftParams::default();
        // score: mean amplitude of bins 20..60; never reaches the goal
        let mut o = |w: &Waveform| {
            let cf = stft_complex(w.samples(), &p)?;
            let total: f64 = (0..cf.frames).map(|f| cf.frame(f)[20..60].iter().map(|z| z.norm()).sum::<f64>()).sum();
            Ok(OracleAnswer { score: total, decision: !forge })
        };
        let goal = if forge { AttackGoal::Forgery } else { AttackGoal::Removal };
        let budget = OracleBudget { max_iterations: 40, max_queries: 30, ..Default::default() };
        let out = square_attack(&mut o, &s, goal, bound, &budget, Seed(seed)).unwrap();
        prop_assert!(out.accepted_linf.iter().all(|&m| m <= bound));
        prop_assert!(out.result.queries_used <= 30);
        let v: Vec<f64> = out.result.trace.iter().map(|t| t.value).collect();
        prop_assert!(v.windows(2).all(|w| !goal.improves(w[0], w[1])));
    }
}
