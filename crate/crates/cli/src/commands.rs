use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use audiomark_core::attack::AttackGoal;
use audiomark_core::audio::{pcm16_round_trip, read_wav, write_wav};
use audiomark_core::harness::{
    emit_report, generate_synthetic_corpus, read_csv, run_attack, run_nobox, write_svgs, AttackMethod,
    AttackSpec, CorpusManifest, EvalReport, ReportFormat, RunConfig, RunContext, ThresholdMode,
};
use audiomark_core::metrics::snr;
use audiomark_core::perturbations::{PerturbationKind, PerturbationPipeline, PerturbationSpec, Perturber};
use audiomark_core::schemes::{
    build_scheme, calibrate_threshold, default_grid, DecisionRule, ExternalSpec, SchemeConfig, SchemeKind,
    WatermarkBits,
};
use audiomark_core::whitebox::RescaleMode;
use audiomark_core::{Error, Result, Seed};

use crate::cli::*;
use crate::config::FileConfig;

const DEFAULT_CLIPS: usize = 200;
const DEFAULT_DURATION_S: f64 = 1.0;
const DEFAULT_ADAPTER_TIMEOUT_S: f64 = 60.0;
const DEFAULT_PAYLOAD_BITS: usize = 16;

/// Global settings after the config-file overlay.
pub struct Globals {
    pub seed: Seed,
    pub jobs: Option<usize>,
    pub file: FileConfig,
}

fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidConfig(format!("missing --{flag} (flag or config key)")))
}

fn rule(r: RuleArg) -> DecisionRule {
    match r {
        RuleArg::BitwiseAccuracy => DecisionRule::BitwiseAccuracy,
        RuleArg::SyncAndBitwiseAccuracy => DecisionRule::SyncAndBitwiseAccuracy,
        RuleArg::Probability => DecisionRule::Probability,
    }
}

struct ExternalSettings {
    rule: DecisionRule,
    payload_bits: usize,
    timeout_secs: f64,
}

impl ExternalSettings {
    fn resolve(a: &ExternalArgs, file: &FileConfig) -> Self {
        ExternalSettings {
            rule: rule(pick(a.rule, &file.rule).unwrap_or(RuleArg::BitwiseAccuracy)),
            payload_bits: pick(a.payload_bits, &file.payload_bits).unwrap_or(DEFAULT_PAYLOAD_BITS),
            timeout_secs: pick(a.adapter_timeout, &file.adapter_timeout).unwrap_or(DEFAULT_ADAPTER_TIMEOUT_S),
        }
    }
}

/// `external:NAME` runs the command in `AUDIOMARK_SCHEME_<NAME>`; any
/// other name is a built-in kind keyed from `seed/scheme`.
fn scheme_config(name: &str, seed: Seed, tau: Option<f64>, ext: &ExternalSettings) -> Result<SchemeConfig> {
    let cfg = match name.strip_prefix("external:") {
        Some(ext_name) => {
            let spec = ExternalSpec {
                command: String::new(),
                rule: ext.rule,
                timeout_secs: ext.timeout_secs,
            };
            let default_tau = if ext.rule.is_probability() { 0.5 } else { 0.8125 };
            SchemeConfig::external(ext_name, spec, ext.payload_bits, default_tau)
        }
        None => SchemeConfig::builtin(SchemeKind::parse(name)?, seed.derive("scheme"))?,
    };
    let cfg = match tau {
        Some(t) => cfg.with_threshold(t),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn single_scheme(a: &SchemeArgs, g: &Globals) -> Result<SchemeConfig> {
    let name = required(pick(a.scheme.clone(), &g.file.scheme), "scheme")?;
    let ext = ExternalSettings::resolve(&a.external, &g.file);
    scheme_config(&name, g.seed, pick(a.tau, &g.file.tau), &ext)
}

fn parse_bits(s: &str, expected: usize) -> Result<WatermarkBits> {
    let w: WatermarkBits = s.parse()?;
    if w.len() != expected {
        return Err(Error::InvalidBits(format!(
            "payload has {} bits, the scheme expects {expected}",
            w.len()
        )));
    }
    Ok(w)
}

pub fn corpus(a: CorpusArgs, g: &Globals) -> Result<ExitCode> {
    let out = required(pick(a.out, &g.file.out), "out")?;
    let clips = pick(a.clips, &g.file.clips).unwrap_or(DEFAULT_CLIPS);
    let duration = pick(a.duration, &g.file.duration).unwrap_or(DEFAULT_DURATION_S);
    let m = generate_synthetic_corpus(&out, clips, duration, g.seed)?;
    println!("wrote {} clips and {}", m.len(), out.join(audiomark_core::harness::MANIFEST_FILE).display());
    Ok(ExitCode::SUCCESS)
}

pub fn embed(a: EmbedArgs, g: &Globals) -> Result<ExitCode> {
    let cfg = single_scheme(&a.scheme, g)?;
    let w = parse_bits(&a.bits, cfg.payload_bits)?;
    let scheme = build_scheme(&cfg)?;
    let s = read_wav(&a.input)?;
    let out = scheme.embed(&s, &w)?;
    write_wav(&a.output, &out)?;
    match snr(&s, &out) {
        Ok(db) => println!("snr={db:.2}"),
        Err(_) => println!("snr=inf"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn detect(a: DetectArgs, g: &Globals) -> Result<ExitCode> {
    let cfg = single_scheme(&a.scheme, g)?;
    let w = a.bits.as_deref().map(|b| parse_bits(b, cfg.payload_bits)).transpose()?;
    if w.is_none() && !cfg.rule().is_probability() {
        return Err(Error::InvalidConfig(format!(
            "scheme `{}` detects against a payload; pass --bits",
            cfg.name
        )));
    }
    let scheme = build_scheme(&cfg)?;
    let s = read_wav(&a.input)?;
    let o = scheme.decode(&s, w.as_ref())?;
    let score = o.score.unwrap_or(f64::NAN);
    println!("decision={} score={score}", u8::from(o.decision));
    Ok(if o.decision { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// One `kind param` stage per line; blank lines and `#` comments skipped.
pub fn read_pipeline(path: &Path, seed: Seed, noise: Option<&PathBuf>) -> Result<PerturbationPipeline> {
    let text = fs::read_to_string(path)?;
    let mut stages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kind, param] = fields[..] else {
            return Err(Error::InvalidConfig(format!(
                "{} line {}: expected `kind param`",
                path.display(),
                i + 1
            )));
        };
        let param: f64 = param.parse().map_err(|_| {
            Error::InvalidConfig(format!("{} line {}: bad parameter `{param}`", path.display(), i + 1))
        })?;
        stages.push(stage(kind, param, seed, noise)?);
    }
    PerturbationPipeline::new(stages)
}

fn stage(kind: &str, param: f64, seed: Seed, noise: Option<&PathBuf>) -> Result<PerturbationSpec> {
    let mut spec = PerturbationSpec::new(PerturbationKind::parse(kind)?, param, seed);
    spec.noise_corpus = noise.cloned();
    Ok(spec)
}

pub fn perturb(a: PerturbArgs, g: &Globals) -> Result<ExitCode> {
    // every stage draws from the same stream, so a pipeline equals chained runs
    let seed = g.seed.derive("perturb");
    let noise = pick(a.noise_corpus, &g.file.noise_corpus);
    let pipeline = match (&a.kind, a.param, &a.pipeline) {
        (Some(k), Some(p), None) => PerturbationPipeline::new(vec![stage(k, p, seed, noise.as_ref())?])?,
        (None, None, Some(path)) => read_pipeline(path, seed, noise.as_ref())?,
        _ => return Err(Error::InvalidConfig("pass --kind and --param, or --pipeline".into())),
    };
    for (i, s) in pipeline.stages.iter().enumerate() {
        s.validate().map_err(|e| Error::Pipeline {
            stage: i,
            source: Box::new(e),
        })?;
    }
    let perturber = Perturber::from_env()?;
    let s = read_wav(&a.input)?;
    // PCM rounding between stages, as if each stage were its own invocation
    let mut out = s.clone();
    for (i, st) in pipeline.stages.iter().enumerate() {
        out = perturber
            .apply(st, &out)
            .and_then(|w| pcm16_round_trip(&w))
            .map_err(|e| Error::Pipeline {
                stage: i,
                source: Box::new(e),
            })?;
    }
    write_wav(&a.output, &out)?;
    match snr(&s, &out) {
        Ok(db) => println!("snr={db:.4}"),
        Err(_) => println!("snr=undefined"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn calibrate(a: CalibrateArgs, g: &Globals) -> Result<ExitCode> {
    let manifest = required(pick(a.corpus, &g.file.corpus), "corpus")?;
    let cfg = single_scheme(&a.scheme, g)?;
    let w = match &a.bits {
        Some(b) => parse_bits(b, cfg.payload_bits)?,
        None => WatermarkBits::random(cfg.payload_bits, g.seed.derive("calibrate"))?,
    };
    let scheme = build_scheme(&cfg)?;
    let clean = CorpusManifest::load(&manifest)?.load_clips()?;
    let marked = clean.iter().map(|s| scheme.embed(s, &w)).collect::<Result<Vec<_>>>()?;
    let out = pick(a.out, &g.file.out);
    match calibrate_threshold(scheme.as_ref(), &marked, &clean, &w, &default_grid()) {
        Ok((tau, curve)) => {
            if let Some(p) = &out {
                curve.write_csv(p)?;
            }
            println!("tau={tau}");
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::CalibrationInfeasible { curve }) => {
            if let Some(p) = &out {
                curve.write_csv(p)?;
            }
            Err(Error::CalibrationInfeasible { curve })
        }
        Err(e) => Err(e),
    }
}

/// Run settings shared by `bench` and `attack`.
fn run_config(a: &RunArgs, g: &Globals) -> Result<(RunConfig, CorpusManifest, PathBuf, Vec<ReportFormat>)> {
    let out = required(pick(a.out.clone(), &g.file.out), "out")?;
    let mut cfg = RunConfig::table3(g.seed);
    if let Some(names) = pick(a.schemes.clone(), &g.file.schemes) {
        let ext = ExternalSettings::resolve(&a.external, &g.file);
        cfg.schemes = names
            .iter()
            .map(|n| scheme_config(n.trim(), g.seed, None, &ext))
            .collect::<Result<_>>()?;
    }
    cfg.threshold = match pick(a.threshold, &g.file.threshold).unwrap_or(ThresholdArg::Calibrate) {
        ThresholdArg::Fixed => ThresholdMode::Fixed,
        ThresholdArg::Calibrate => ThresholdMode::Calibrate,
    };
    if let Some(cap) = pick(a.cap, &g.file.cap) {
        cfg.nobox_cap = Some(cap);
        cfg.attack_cap = cap;
    }
    cfg.noise_corpus = pick(a.noise_corpus.clone(), &g.file.noise_corpus);
    cfg.jobs = g.jobs;
    let corpus = match pick(a.corpus.clone(), &g.file.corpus) {
        Some(p) => CorpusManifest::load(p)?,
        None => generate_synthetic_corpus(
            out.join("corpus"),
            g.file.clips.unwrap_or(DEFAULT_CLIPS),
            g.file.duration.unwrap_or(DEFAULT_DURATION_S),
            g.seed,
        )?,
    };
    let formats = match pick(a.format.clone(), &g.file.format) {
        Some(f) => f.iter().map(|s| ReportFormat::parse(s.trim())).collect::<Result<_>>()?,
        None => ReportFormat::ALL.to_vec(),
    };
    Ok((cfg, corpus, out, formats))
}

fn finish(report: &EvalReport, out: &Path, formats: &[ReportFormat]) -> Result<ExitCode> {
    let files = emit_report(report, out, formats)?;
    for r in report.rows.iter().filter(|r| r.group == "overall") {
        let show = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.3}"));
        println!(
            "{} {} {} fnr={} fpr={} snr={} quality={}",
            r.scheme,
            r.condition,
            r.param,
            show(r.fnr),
            show(r.fpr),
            show(r.mean_snr_db),
            show(r.mean_quality)
        );
    }
    if report.metadata.degraded {
        eprintln!(
            "warning: {} of {} samples failed; run marked degraded",
            report.metadata.samples_failed, report.metadata.samples_attempted
        );
    }
    for s in &report.metadata.skipped {
        eprintln!("skipped: {s}");
    }
    eprintln!("wrote {} files to {}", files.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn bench(a: BenchArgs, g: &Globals) -> Result<ExitCode> {
    let Suite::Table3 = a.suite;
    let (mut cfg, corpus, out, formats) = run_config(&a.run, g)?;
    if let Some(kinds) = pick(a.kinds, &g.file.kinds) {
        let kinds: Vec<PerturbationKind> =
            kinds.iter().map(|k| PerturbationKind::parse(k.trim())).collect::<Result<_>>()?;
        cfg.grid.retain(|e| kinds.contains(&e.kind));
    }
    let report = run_nobox(&cfg, &corpus, &RunContext::from_env()?)?;
    finish(&report, &out, &formats)
}

fn attack_spec(a: &AttackArgs, g: &Globals) -> Result<AttackSpec> {
    let method = AttackMethod::parse(&a.method)?;
    let mut spec = AttackSpec::new(method);
    spec.goals = match pick(a.goal, &g.file.goal).unwrap_or(GoalArg::Both) {
        GoalArg::Removal => vec![AttackGoal::Removal],
        GoalArg::Forgery => vec![AttackGoal::Forgery],
        GoalArg::Both => vec![AttackGoal::Removal, AttackGoal::Forgery],
    };
    if let Some(q) = pick(a.max_queries, &g.file.max_queries) {
        spec.budget.max_queries = q;
    }
    if let Some(n) = pick(a.grad_est_init, &g.file.grad_est_init) {
        spec.budget.grad_est_init = n;
    }
    if let Some(n) = pick(a.grad_est_cap, &g.file.grad_est_cap) {
        spec.budget.grad_est_cap = n;
    }
    let snr = pick(a.snr.clone(), &g.file.snr);
    let bound = pick(a.bound.clone(), &g.file.bound);
    let iterations = pick(a.iterations, &g.file.iterations);
    let misplaced = |flag: &str| {
        Err(Error::InvalidConfig(format!("--{flag} does not apply to {}", method.label())))
    };
    match method {
        AttackMethod::Hsja(_) => {
            if snr.is_some() {
                return misplaced("snr");
            }
            if bound.is_some() {
                return misplaced("bound");
            }
            if let Some(n) = iterations {
                spec.budget.max_iterations = n;
                spec.params = vec![n as f64];
            }
        }
        AttackMethod::Square => {
            if snr.is_some() {
                return misplaced("snr");
            }
            if let Some(b) = bound {
                spec.params = b;
            }
            if let Some(n) = iterations {
                spec.budget.max_iterations = n;
            }
        }
        AttackMethod::Whitebox | AttackMethod::Ifgsm => {
            if bound.is_some() {
                return misplaced("bound");
            }
            if let Some(r) = snr {
                spec.params = r;
            }
            if let Some(n) = iterations {
                spec.whitebox.iterations = n;
            }
            if let Some(lr) = pick(a.learning_rate, &g.file.learning_rate) {
                spec.whitebox.learning_rate = lr;
            }
            if let Some(m) = pick(a.rescale, &g.file.rescale) {
                spec.whitebox.rescale_mode = match m {
                    RescaleArg::PaperPower => RescaleMode::PaperPower,
                    RescaleArg::AmplitudeExact => RescaleMode::AmplitudeExact,
                };
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn attack(a: AttackArgs, g: &Globals) -> Result<ExitCode> {
    let spec = attack_spec(&a, g)?;
    let (cfg, corpus, out, formats) = run_config(&a.run, g)?;
    let report = run_attack(&cfg, &corpus, &spec, &RunContext::from_env()?)?;
    finish(&report, &out, &formats)
}

pub fn report(a: ReportArgs) -> Result<ExitCode> {
    let rows = read_csv(&a.input)?;
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    fs::create_dir_all(&a.out)?;
    for p in write_svgs(&rows, &a.out)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
