//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs every criterion by default; pass criterion numbers to run a
//! subset (`cargo test --test acceptance -- 5 6`). Exits non-zero if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use audiomark_core::attack::{AttackGoal, AttackResult};
use audiomark_core::audio::{istft, stft, StftParams, Waveform};
use audiomark_core::blackbox::{hsja, square_attack, HsjaDomain, OracleBudget, SchemeOracle};
use audiomark_core::harness::{
    generate_synthetic_corpus, group_analysis, run_attack, run_nobox, synthetic_clip, AttackMethod,
    AttackSpec, Attribute, CorpusManifest, EvalReport, GapMetric, GridEntry, RunConfig, RunContext, Sex,
    ThresholdMode,
};
use audiomark_core::metrics::{bitwise_accuracy, snr, welch_ttest};
use audiomark_core::perturbations::{
    apply, apply_pipeline, PerturbationKind, PerturbationPipeline, PerturbationSpec,
};
use audiomark_core::schemes::{
    build_scheme, calibrate_outcomes, default_grid, LossTarget, SchemeConfig, SchemeKind,
    WatermarkBits, WatermarkScheme,
};
use audiomark_core::whitebox::{scaling_factor, RescaleMode};
use audiomark_core::Seed;
use rayon::prelude::*;

const SEED: Seed = Seed(7);
const KINDS: [SchemeKind; 3] = [SchemeKind::SpreadSpectrum, SchemeKind::SyncPayload, SchemeKind::Probability];
const SNR_GRID: [f64; 5] = [20.0, 30.0, 40.0, 50.0, 60.0];
const BOUNDS: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

type Outcome = Result<String, String>;

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, clean_detection),
        (2, whitebox_removal),
        (3, whitebox_forgery),
        (4, snr_constraint),
        (5, hsja_progress),
        (6, square_contract),
        (7, gradient_oracle),
        (8, dsp_invariants),
        (9, metric_fixtures),
        (10, reproducibility),
    ];
    println!("acceptance on {} core(s)", rayon::current_num_threads());
    let mut failed = 0;
    for (n, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let t = start.elapsed();
    ensure(t < limit, || format!("{detail}; took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs()))?;
    Ok(detail)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn scheme_config(kind: SchemeKind) -> SchemeConfig {
    SchemeConfig::builtin(kind, SEED.derive("scheme")).unwrap()
}

fn scheme(kind: SchemeKind) -> Box<dyn WatermarkScheme> {
    build_scheme(&scheme_config(kind)).unwrap()
}

fn clip(i: usize, dur: f64) -> Waveform {
    synthetic_clip(SEED, i, dur).unwrap()
}

fn payload(n: usize, i: usize) -> WatermarkBits {
    WatermarkBits::random(n, SEED.derive("payload").derive_index(i as u64)).unwrap()
}

fn monotone(xs: &[f64], ok: impl Fn(f64, f64) -> bool) -> bool {
    xs.windows(2).all(|p| ok(p[0], p[1]))
}

fn fmt_rates(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(" "))
}

fn corpus(dir: &Path, n: usize, dur: f64) -> CorpusManifest {
    generate_synthetic_corpus(dir.join("corpus"), n, dur, SEED).unwrap()
}

fn overall_rate(report: &EvalReport, scheme: &str, condition: &str, param: f64, fnr: bool) -> Result<f64, String> {
    let row = report
        .rows
        .iter()
        .find(|r| r.scheme == scheme && r.condition == condition && r.param == param && r.group == "overall")
        .ok_or_else(|| format!("no row for {scheme} {condition} {param}"))?;
    if fnr { row.fnr } else { row.fpr }.ok_or_else(|| format!("undefined rate for {scheme} {condition} {param}"))
}

fn clean_detection() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    for kind in KINDS {
        let s = scheme(kind);
        let outcomes: Vec<_> = (0..200)
            .into_par_iter()
            .map(|i| {
                let x = clip(i, 1.0);
                let w = payload(s.payload_bits(), i);
                let xw = s.embed(&x, &w)?;
                Ok((s.decode(&xw, Some(&w))?, s.decode(&x, Some(&w))?))
            })
            .collect::<audiomark_core::Result<_>>()
            .map_err(err)?;
        let (wm, un): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
        let (tau, curve) = calibrate_outcomes(s.rule(), &wm, &un, &default_grid()).map_err(err)?;
        let p = curve.points.iter().find(|p| p.tau == tau).unwrap();
        ensure(p.fnr < 0.01 && p.fpr < 0.01, || format!("{}: fnr {} fpr {}", s.name(), p.fnr, p.fpr))?;
        details.push(format!("{} tau={tau} fnr={} fpr={}", s.name(), p.fnr, p.fpr));
    }
    within(start, Duration::from_secs(60), format!("200 clips: {}", details.join(", ")))
}

fn whitebox_run(goal: AttackGoal) -> Result<EvalReport, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let m = corpus(dir.path(), 200, 1.0);
    let cfg = RunConfig {
        grid: Vec::new(),
        attack_cap: 20,
        ..RunConfig::table3(SEED)
    };
    let mut spec = AttackSpec::new(AttackMethod::Whitebox);
    spec.goals = vec![goal];
    spec.params = SNR_GRID.to_vec();
    spec.whitebox.iterations = 1000;
    run_attack(&cfg, &m, &spec, &RunContext::default()).map_err(err)
}

fn whitebox_rates(report: &EvalReport, goal: AttackGoal) -> Result<Vec<(String, Vec<f64>)>, String> {
    let condition = AttackSpec::new(AttackMethod::Whitebox).condition(goal);
    report
        .metadata
        .schemes
        .iter()
        .map(|s| {
            let rates = SNR_GRID
                .iter()
                .map(|&r| overall_rate(report, &s.name, &condition, r, goal == AttackGoal::Removal))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((s.name.clone(), rates))
        })
        .collect()
}

fn whitebox_removal() -> Outcome {
    let start = Instant::now();
    let report = whitebox_run(AttackGoal::Removal)?;
    let mut details = Vec::new();
    for (name, fnr) in whitebox_rates(&report, AttackGoal::Removal)? {
        ensure(fnr[0] >= 0.95, || format!("{name}: FNR {} at R=20", fnr[0]))?;
        ensure(monotone(&fnr, |a, b| b <= a), || format!("{name}: FNR not non-increasing {}", fmt_rates(&fnr)))?;
        details.push(format!("{name} FNR {}", fmt_rates(&fnr)));
    }
    within(start, Duration::from_secs(300), format!("R={SNR_GRID:?}: {}", details.join(", ")))
}

fn whitebox_forgery() -> Outcome {
    let start = Instant::now();
    let report = whitebox_run(AttackGoal::Forgery)?;
    let mut details = Vec::new();
    for (name, fpr) in whitebox_rates(&report, AttackGoal::Forgery)? {
        ensure(fpr[0] >= 0.9 && fpr[1] >= 0.9, || format!("{name}: FPR {} at R=20,30", fmt_rates(&fpr)))?;
        ensure(monotone(&fpr, |a, b| b <= a), || format!("{name}: FPR not non-increasing {}", fmt_rates(&fpr)))?;
        details.push(format!("{name} FPR {}", fmt_rates(&fpr)));
    }
    within(start, Duration::from_secs(300), format!("R={SNR_GRID:?}: {}", details.join(", ")))
}

fn snr_constraint() -> Outcome {
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let fixtures: [(&[f64], &[f64], f64, f64); 4] = [
        (&[2.0; 8], &[0.5; 8], 30.0, 62.5),
        (&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0], 20.0, 100.0),
        (&[1.0, -1.0, 1.0, -1.0], &[0.01, 0.01, -0.01, -0.01], 20.0, 1.0),
        (&[3.0, 4.0], &[0.3, 0.4], 25.0, 10f64.powf(0.5)),
    ];
    for (s, d, r, want) in fixtures {
        let got = scaling_factor(s, d, r, RescaleMode::PaperPower).map_err(err)?;
        ensure(rel(got, want), || format!("PaperPower factor {got} for R={r}, expected {want}"))?;
    }

    let dir = tempfile::tempdir().map_err(err)?;
    let m = corpus(dir.path(), 20, 0.5);
    let cfg = RunConfig {
        grid: Vec::new(),
        attack_cap: 6,
        threshold: ThresholdMode::Fixed,
        ..RunConfig::table3(SEED)
    };
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for method in [AttackMethod::Whitebox, AttackMethod::Ifgsm] {
        let mut spec = AttackSpec::new(method);
        spec.params = SNR_GRID.to_vec();
        spec.whitebox.iterations = 200;
        spec.whitebox.rescale_mode = RescaleMode::AmplitudeExact;
        let report = run_attack(&cfg, &m, &spec, &RunContext::default()).map_err(err)?;
        for s in &report.samples {
            let Some(db) = s.snr_db else { continue };
            checked += 1;
            worst = worst.min(db - s.param);
            ensure(db >= s.param - 0.01, || format!("{} {} R={} snr {db}", s.scheme, s.condition, s.param))?;
        }
    }
    ensure(checked > 0, || "no attack samples".into())?;
    Ok(format!(
        "4 PaperPower fixtures exact; {checked} white-box/I-FGSM samples, min snr - R = {worst:.4} dB"
    ))
}

fn hsja_progress() -> Outcome {
    let start = Instant::now();
    let s = scheme(SchemeKind::SpreadSpectrum);
    let budget = OracleBudget {
        max_iterations: 2000,
        grad_est_init: 5,
        grad_est_cap: 10,
        ..OracleBudget::default()
    };
    let runs: Vec<Result<(AttackResult, WatermarkBits), String>> = (0..20)
        .into_par_iter()
        .map(|i| {
            let w = payload(s.payload_bits(), i);
            let xw = s.embed(&clip(i, 0.25), &w).map_err(err)?;
            let mut oracle = SchemeOracle::new(s.as_ref(), w.clone());
            let r = hsja(&mut oracle, &xw, AttackGoal::Removal, HsjaDomain::Spectrogram, &budget, SEED.derive_index(i as u64))
                .map_err(|e| format!("clip {i}: {e}"))?;
            Ok((r, w))
        })
        .collect();
    let (mut successes, mut progressed, mut gains) = (0, 0, Vec::new());
    for (i, run) in runs.iter().enumerate() {
        let Ok((r, w)) = run else { continue };
        if r.success {
            successes += 1;
            ensure(!s.detect(&r.perturbed, w).map_err(err)?, || format!("clip {i}: success does not re-verify"))?;
        }
        let values: Vec<f64> = r.trace.iter().map(|t| t.value).collect();
        ensure(monotone(&values, |a, b| b >= a), || format!("clip {i}: trace decreases"))?;
        let gain = r.final_snr - values[0];
        gains.push(gain);
        if gain >= 5.0 {
            progressed += 1;
        }
    }
    let failed_init = runs.iter().filter(|r| r.is_err()).count();
    let mean = gains.iter().sum::<f64>() / gains.len().max(1) as f64;
    let detail = format!(
        "20 clips: {successes} successes re-verified, {failed_init} init failures, {progressed}/20 gained >= 5 dB, mean gain {mean:.1} dB"
    );
    ensure(progressed * 10 >= 20 * 8, || detail.clone())?;
    within(start, Duration::from_secs(900), detail)
}

fn square_contract() -> Outcome {
    let start = Instant::now();
    let budget = OracleBudget {
        max_iterations: 2000,
        ..OracleBudget::default()
    };
    let mut details = Vec::new();
    for kind in KINDS {
        let s = scheme(kind);
        let mut fnr = Vec::new();
        let mut mean_snr = Vec::new();
        for bound in BOUNDS {
            let runs: Vec<Result<(bool, f64), String>> = (0..20)
                .into_par_iter()
                .map(|i| {
                    let w = payload(s.payload_bits(), i);
                    let xw = s.embed(&clip(i, 0.5), &w).map_err(err)?;
                    let mut oracle = SchemeOracle::new(s.as_ref(), w.clone());
                    let seed = SEED.derive("square").derive_index(i as u64);
                    let out = square_attack(&mut oracle, &xw, AttackGoal::Removal, bound, &budget, seed).map_err(err)?;
                    ensure(out.accepted_linf.iter().all(|&l| l <= bound), || {
                        format!("{} clip {i}: accepted ℓ∞ {:?} over {bound}", s.name(), out.accepted_linf)
                    })?;
                    let values: Vec<f64> = out.result.trace.iter().map(|t| t.value).collect();
                    ensure(monotone(&values, |a, b| b <= a), || format!("{} clip {i}: score trace rises", s.name()))?;
                    let detected = s.detect(&out.result.perturbed, &w).map_err(err)?;
                    ensure(detected != out.result.success, || format!("{} clip {i}: success does not re-verify", s.name()))?;
                    Ok((!detected, out.result.final_snr))
                })
                .collect();
            let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
            fnr.push(runs.iter().filter(|r| r.0).count() as f64 / runs.len() as f64);
            mean_snr.push(runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64);
        }
        let name = s.name().to_string();
        ensure(monotone(&fnr, |a, b| b >= a), || format!("{name}: FNR not non-decreasing {}", fmt_rates(&fnr)))?;
        ensure(monotone(&mean_snr, |a, b| b < a), || format!("{name}: SNR not decreasing {}", fmt_rates(&mean_snr)))?;
        details.push(format!("{name} FNR {} SNR {}", fmt_rates(&fnr), fmt_rates(&mean_snr)));
    }
    within(start, Duration::from_secs(600), format!("bounds {BOUNDS:?}: {}", details.join(", ")))
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst_all = 0.0f64;
    for kind in KINDS {
        let s = scheme(kind);
        let ds = s.differentiable().ok_or("built-in scheme without gradients")?;
        let worst = (0..10)
            .into_par_iter()
            .map(|c| {
                let x = clip(100 + c, 0.5);
                let w = payload(s.payload_bits(), 100 + c);
                let (point, target) = if s.rule().is_probability() {
                    if c % 2 == 0 {
                        (s.embed(&x, &w)?, LossTarget::ProbabilityAbove { tau: 0.5 })
                    } else {
                        (x, LossTarget::ProbabilityBelow { tau: 0.5 })
                    }
                } else {
                    (x, LossTarget::Bits(ds.carrier_target(&w)?))
                };
                let g = ds.gradient(&point, &target)?;
                let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut rng = SEED.derive("fd").derive_index(c as u64).rng();
                let mut worst = 0.0f64;
                for _ in 0..100 {
                    let i = rand::Rng::random_range(&mut rng, 0..point.len());
                    let at = |k: f64| -> audiomark_core::Result<f64> {
                        let mut v = point.samples().to_vec();
                        v[i] += k * h;
                        ds.loss(&point.with_samples(v)?, &target)
                    };
                    // fourth-order central stencil
                    let fd = (at(-2.0)? - 8.0 * at(-1.0)? + 8.0 * at(1.0)? - at(2.0)?) / (12.0 * h);
                    let denom = g[i].abs().max(fd.abs()).max(1e-3 * gmax);
                    if denom > 0.0 {
                        worst = worst.max((fd - g[i]).abs() / denom);
                    }
                }
                Ok(worst)
            })
            .collect::<audiomark_core::Result<Vec<f64>>>()
            .map_err(err)?
            .into_iter()
            .fold(0.0, f64::max);
        ensure(worst < 1e-4, || format!("{}: max relative error {worst:e}", s.name()))?;
        worst_all = worst_all.max(worst);
    }
    within(
        start,
        Duration::from_secs(30),
        format!("3 schemes x 10 clips x 100 coordinates, max relative error {worst_all:.2e}"),
    )
}

fn dsp_invariants() -> Outcome {
    let x = clip(3, 1.0);
    let sg = stft(&x, &StftParams::default()).map_err(err)?;
    let y = istft(&sg).map_err(err)?;
    let num: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = x.samples().iter().map(|a| a * a).sum();
    let rt = (num / den).sqrt();
    ensure(rt < 1e-6, || format!("STFT round trip relative L2 {rt:e}"))?;

    let mut worst_db = 0.0f64;
    for kind in [PerturbationKind::GaussianNoise, PerturbationKind::BackgroundNoise] {
        for &target in kind.grid() {
            for i in 0..5 {
                let spec = PerturbationSpec::new(kind, target, SEED.derive_index(i));
                let x = clip(i as usize, 1.0);
                let db = snr(&x, &apply(&spec, &x).map_err(err)?).map_err(err)?;
                worst_db = worst_db.max((db - target).abs());
            }
        }
    }
    ensure(worst_db <= 0.01, || format!("SNR-targeted noise off by {worst_db} dB"))?;

    for &levels in PerturbationKind::Quantization.grid() {
        let spec = PerturbationSpec::new(PerturbationKind::Quantization, levels, SEED);
        let once = apply(&spec, &x).map_err(err)?;
        let twice = apply(&spec, &once).map_err(err)?;
        ensure(once == twice, || format!("quantization at {levels} levels is not idempotent"))?;
    }

    let stages: Vec<PerturbationSpec> = [
        (PerturbationKind::GaussianNoise, 20.0),
        (PerturbationKind::LowpassFilter, 0.3),
        (PerturbationKind::Echo, 0.5),
        (PerturbationKind::Quantization, 16.0),
        (PerturbationKind::TimeStretch, 1.1),
    ]
    .into_iter()
    .enumerate()
    .map(|(k, (kind, p))| PerturbationSpec::new(kind, p, SEED.derive_index(k as u64)))
    .collect();
    let piped = apply_pipeline(&PerturbationPipeline::new(stages.clone()).map_err(err)?, &x).map_err(err)?;
    let mut chained = x.clone();
    for st in &stages {
        chained = apply(st, &chained).map_err(err)?;
    }
    ensure(piped == chained, || "pipeline differs from sequential application".into())?;
    Ok(format!(
        "STFT round trip {rt:.1e}, noise SNR within {worst_db:.2e} dB, quantization idempotent, 5-stage pipeline bit-exact"
    ))
}

/// (a, b, p) from scipy.stats.ttest_ind(a, b, equal_var=False).
const WELCH_FIXTURES: [(&[f64], &[f64], f64); 5] = [
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0], 0.04928433820673049),
    (&[0.2, 0.4, 0.1, 0.3], &[0.9, 0.7, 0.8, 1.0, 0.6], 0.0007093070760374699),
    (
        &[10.0, 12.0, 9.0, 11.0, 13.0, 10.5],
        &[10.2, 11.8, 9.5, 10.9, 12.1, 10.0, 11.3],
        0.9011677426325873,
    ),
    (
        &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
        &[1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0],
        0.0823460379837187,
    ),
    (&[3.1, 2.9, 3.3, 3.0], &[1.2, 5.8, 2.4, 7.7, 0.3], 0.7882332188293728),
];

fn metric_fixtures() -> Outcome {
    let bits = |s: &str| s.parse::<WatermarkBits>().unwrap();
    let a = bits("1110110110010110");
    let cases = [
        (a.clone(), 1.0),
        (a.complement(), 0.0),
        (bits("1110110110010101"), 0.875),
        (bits("0110110110010110"), 0.9375),
        (bits("1110110110011001"), 0.75),
    ];
    for (b, want) in cases {
        let got = bitwise_accuracy(&a, &b).map_err(err)?;
        ensure(got == want, || format!("bitwise accuracy {got}, expected {want}"))?;
    }
    ensure(bitwise_accuracy(&a, &bits("101")).is_err(), || "length mismatch accepted".into())?;

    let mut worst_p = 0.0f64;
    for (x, y, p) in WELCH_FIXTURES {
        let got = welch_ttest(x, y).map_err(err)?.p_value;
        worst_p = worst_p.max((got - p).abs());
    }
    ensure(worst_p < 1e-6, || format!("Welch p-value off by {worst_p:e}"))?;

    let dir = tempfile::tempdir().map_err(err)?;
    let m = corpus(dir.path(), 200, 1.0);
    let mut cfg = RunConfig {
        grid: vec![GridEntry {
            kind: PerturbationKind::GaussianNoise,
            params: vec![5.0, 10.0, 15.0, 20.0],
        }],
        ..RunConfig::table3(SEED)
    };
    cfg.schemes = vec![scheme_config(SchemeKind::SpreadSpectrum)];
    let ctx = RunContext::default();
    let pooled = |report: &EvalReport, attr| -> Vec<_> {
        group_analysis(report, attr)
            .into_iter()
            .filter(|g| g.param.is_none() && g.metric == GapMetric::Fnr)
            .collect()
    };
    let unbiased = run_nobox(&cfg, &m, &ctx).map_err(err)?;
    let mut null_pairs = 0;
    for attr in [Attribute::Sex, Attribute::Age] {
        for g in pooled(&unbiased, attr) {
            null_pairs += 1;
            ensure(!g.significant, || format!("unbiased corpus: {} vs {} p={:?}", g.group_a, g.group_b, g.p_value))?;
        }
    }
    let tau = unbiased.metadata.schemes[0].threshold;
    cfg.schemes[0] = cfg.schemes[0].clone().with_threshold(tau);
    cfg.threshold = ThresholdMode::Fixed;
    let biased = run_nobox(&cfg, &m.with_headroom_offset(Sex::Female, -6.0), &ctx).map_err(err)?;
    let gap = pooled(&biased, Attribute::Sex);
    let g = gap.first().ok_or("no sex gap row")?;
    ensure(g.significant && g.rate_b > g.rate_a, || format!("6 dB gap not flagged: {g:?}"))?;
    Ok(format!(
        "5 bitwise-accuracy cases exact, Welch p within {worst_p:.1e}, 6 dB gap p={:.1e} ({:.3} vs {:.3}), {null_pairs} null pairs not significant",
        g.p_value.unwrap_or(f64::NAN),
        g.rate_a,
        g.rate_b
    ))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut csvs = Vec::new();
    let mut times = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let start = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_audiomark"))
            .args(["bench", "--suite", "table3", "--seed", "7", "--format", "csv", "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        let t = start.elapsed();
        ensure(o.status.success(), || format!("run {run}: {}", String::from_utf8_lossy(&o.stderr)))?;
        ensure(t < Duration::from_secs(600), || format!("run {run} took {:.1} s", t.as_secs_f64()))?;
        times.push(t.as_secs_f64());
        csvs.push(fs::read(out.join("report.csv")).map_err(err)?);
    }
    ensure(csvs[0] == csvs[1], || "report.csv differs between runs".into())?;
    let rows = String::from_utf8_lossy(&csvs[0]).lines().count() - 1;
    Ok(format!(
        "byte-identical report.csv ({rows} rows) over 200 clips x 3 schemes; runs took {:.0} s and {:.0} s",
        times[0], times[1]
    ))
}
