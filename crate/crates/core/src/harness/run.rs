use std::collections::BTreeMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{AttackMethod, AttackSpec, RunConfig, ThresholdMode};
use super::corpus::{CorpusManifest, ManifestEntry};
use super::report::{aggregate, EvalReport, FailureRecord, RunMetadata, SampleRecord, SchemeSummary, TraceRecord};
use crate::attack::{AttackGoal, AttackResult};
use crate::audio::{read_wav, write_wav, StftParams, Waveform};
use crate::blackbox::{hsja, square_attack, SchemeOracle};
use crate::error::{Error, Result};
use crate::metrics::{quality_proxy, snr};
use crate::perturbations::{PerturbationSpec, Perturber};
use crate::schemes::{build_scheme, calibrate_outcomes, default_grid, SchemeConfig, WatermarkBits, WatermarkScheme};
use crate::subprocess::run_shell;
use crate::whitebox::{ifgsm, whitebox_forge, whitebox_remove, WhiteboxConfig, WhiteboxVariant};
use crate::Seed;

/// Share of failed samples above which a run is marked degraded.
pub const DEGRADED_FRACTION: f64 = 0.1;

/// Environment variable naming an external quality command.
pub const QUALITY_CMD_ENV: &str = "AUDIOMARK_QUALITY_CMD";

const QUALITY_TIMEOUT: Duration = Duration::from_secs(120);

/// Quality score of a perturbed clip against its reference.
#[derive(Debug, Clone, PartialEq)]
pub enum QualityTool {
    /// The built-in spectral proxy.
    Proxy,
    /// `command ref.wav deg.wav`; the last token on stdout is the score.
    External { command: String, timeout: Duration },
}

impl QualityTool {
    pub fn from_env() -> Self {
        match std::env::var(QUALITY_CMD_ENV) {
            Ok(c) if !c.trim().is_empty() => QualityTool::External {
                command: c,
                timeout: QUALITY_TIMEOUT,
            },
            _ => QualityTool::Proxy,
        }
    }

    pub fn label(&self) -> String {
        match self {
            QualityTool::Proxy => "proxy_moslike".into(),
            QualityTool::External { command, .. } => format!("external: {command}"),
        }
    }

    pub fn score(&self, reference: &Waveform, degraded: &Waveform) -> Result<f64> {
        match self {
            QualityTool::Proxy => Ok(quality_proxy(reference, degraded)?.proxy_moslike),
            QualityTool::External { command, timeout } => {
                let dir = tempfile::tempdir()?;
                let (r, d) = (dir.path().join("ref.wav"), dir.path().join("deg.wav"));
                write_wav(&r, reference)?;
                write_wav(&d, degraded)?;
                let cmd = format!("{command} '{}' '{}'", r.display(), d.display());
                let out = run_shell(&cmd, b"", *timeout)
                    .map_err(|e| Error::QualityTool(format!("{}; stderr: {}", e.message(), e.stderr())))?;
                let text = String::from_utf8_lossy(&out);
                text.split_whitespace()
                    .last()
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::QualityTool(format!("no score in output `{}`", text.trim())))
            }
        }
    }
}

/// Everything a run needs besides its config and corpus.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub perturber: Perturber,
    pub quality: Option<QualityTool>,
}

impl RunContext {
    /// Codecs and quality command from the environment.
    pub fn from_env() -> Result<Self> {
        Ok(RunContext {
            perturber: Perturber::from_env()?,
            quality: Some(QualityTool::from_env()),
        })
    }

    fn quality(&self) -> QualityTool {
        self.quality.clone().unwrap_or(QualityTool::Proxy)
    }
}

/// Up to `cap` clip indices, drawn round-robin over (sex, age,
/// language) cells with a seeded order inside each cell; sorted.
pub fn stratified_sample(corpus: &CorpusManifest, cap: usize, seed: Seed) -> Vec<usize> {
    let n = corpus.len();
    if cap >= n {
        return (0..n).collect();
    }
    let mut cells: BTreeMap<(_, _, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in corpus.entries.iter().enumerate() {
        cells.entry((e.sex, e.age, e.language.as_str())).or_default().push(i);
    }
    let mut rng = seed.rng();
    let mut queues: Vec<Vec<usize>> = cells
        .into_values()
        .map(|mut v| {
            v.shuffle(&mut rng);
            v.reverse();
            v
        })
        .collect();
    let mut picked = Vec::with_capacity(cap);
    while picked.len() < cap {
        for q in queues.iter_mut() {
            if picked.len() == cap {
                break;
            }
            if let Some(i) = q.pop() {
                picked.push(i);
            }
        }
    }
    picked.sort_unstable();
    picked
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn payload(seed: Seed, n: usize, clip: usize) -> Result<WatermarkBits> {
    WatermarkBits::random(n, seed.derive("payload").derive_index(clip as u64))
}

/// Clean clips, their watermarked versions and payloads for one scheme.
struct Prepared {
    payloads: Vec<Result<WatermarkBits>>,
    watermarked: Vec<Result<Waveform>>,
}

fn prepare(
    scheme: &dyn WatermarkScheme,
    seed: Seed,
    entries: &[(usize, &ManifestEntry)],
    clips: &[Result<Waveform>],
) -> Prepared {
    let payloads: Vec<Result<WatermarkBits>> = entries
        .iter()
        .map(|&(i, _)| payload(seed, scheme.payload_bits(), i))
        .collect();
    let watermarked = entries
        .par_iter()
        .zip(clips.par_iter())
        .zip(payloads.par_iter())
        .map(|((&(_, e), s), w)| {
            let (s, w) = (ok_ref(s)?, ok_ref(w)?);
            scheme.embed_with_gain(s, w, e.embed_offset_db)
        })
        .collect();
    Prepared { payloads, watermarked }
}

fn ok_ref<T>(r: &Result<T>) -> Result<&T> {
    r.as_ref().map_err(|e| Error::InvalidWaveform(e.to_string()))
}

/// The scheme as evaluated, with a calibrated threshold when asked.
fn resolve_scheme(
    cfg: &SchemeConfig,
    mode: ThresholdMode,
    prepared: &Prepared,
    clips: &[Result<Waveform>],
) -> Result<(Box<dyn WatermarkScheme>, bool)> {
    let scheme = build_scheme(cfg)?;
    if mode == ThresholdMode::Fixed {
        return Ok((scheme, false));
    }
    let decoded: Vec<_> = (0..clips.len())
        .into_par_iter()
        .map(|k| -> Result<_> {
            let w = ok_ref(&prepared.payloads[k])?;
            let sw = ok_ref(&prepared.watermarked[k])?;
            let su = ok_ref(&clips[k])?;
            Ok((scheme.decode(sw, Some(w))?, scheme.decode(su, Some(w))?))
        })
        .collect();
    let (wm, un): (Vec<_>, Vec<_>) = decoded.into_iter().filter_map(|r| r.ok()).unzip();
    let (tau, _) = calibrate_outcomes(scheme.rule(), &wm, &un, &default_grid())?;
    Ok((build_scheme(&cfg.clone().with_threshold(tau))?, true))
}

fn record(e: &ManifestEntry, scheme: &str, condition: &str, param: f64, clip: usize) -> SampleRecord {
    SampleRecord {
        scheme: scheme.into(),
        condition: condition.into(),
        param,
        clip,
        sex: e.sex,
        age: e.age,
        language: e.language.clone(),
        detected_watermarked: None,
        detected_unwatermarked: None,
        snr_db: None,
        quality: None,
        queries: None,
    }
}

/// SNR and quality when the pair is comparable (equal length, non-silent
/// reference).
fn pair_metrics(q: &QualityTool, reference: &Waveform, perturbed: &Waveform) -> Result<(Option<f64>, Option<f64>)> {
    if reference.len() != perturbed.len() {
        return Ok((None, None));
    }
    match snr(reference, perturbed) {
        Ok(v) => Ok((Some(v), Some(q.score(reference, perturbed)?))),
        Err(Error::UndefinedSnr) => Ok((None, None)),
        Err(e) => Err(e),
    }
}

struct Collector {
    rows: Vec<super::report::ReportRow>,
    samples: Vec<SampleRecord>,
    traces: Vec<TraceRecord>,
    failures: Vec<FailureRecord>,
    attempted: usize,
    seed: u64,
}

impl Collector {
    fn new(seed: u64) -> Self {
        Collector {
            rows: Vec::new(),
            samples: Vec::new(),
            traces: Vec::new(),
            failures: Vec::new(),
            attempted: 0,
            seed,
        }
    }

    fn cell(&mut self, scheme: &str, condition: &str, param: f64, results: Vec<(usize, Result<(SampleRecord, Option<TraceRecord>)>)>) {
        let mut cell = Vec::new();
        for (clip, r) in results {
            self.attempted += 1;
            match r {
                Ok((s, t)) => {
                    cell.push(s);
                    self.traces.extend(t);
                }
                Err(e) => self.failures.push(FailureRecord {
                    scheme: scheme.into(),
                    condition: condition.into(),
                    param: Some(param),
                    clip,
                    error: e.to_string(),
                }),
            }
        }
        self.rows.extend(aggregate(&cell, self.seed));
        self.samples.extend(cell);
    }

    fn finish(self, mut metadata: RunMetadata) -> EvalReport {
        metadata.samples_attempted = self.attempted;
        metadata.samples_failed = self.failures.len();
        metadata.degraded = self.failures.len() as f64 > DEGRADED_FRACTION * self.attempted as f64;
        metadata.failures = self.failures;
        EvalReport {
            rows: self.rows,
            metadata,
            samples: self.samples,
            traces: self.traces,
        }
    }
}

fn metadata(cfg: &RunConfig, corpus: &CorpusManifest, kind: &str, clips: Vec<usize>, quality: &QualityTool) -> RunMetadata {
    RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        run_kind: kind.into(),
        seed: cfg.seed.value(),
        stft: StftParams::default(),
        schemes: Vec::new(),
        config: cfg.clone(),
        attack: None,
        corpus_manifest: corpus.source.clone(),
        corpus_clips: corpus.len(),
        clips_evaluated: clips,
        quality_metric: quality.label(),
        background_noise: match &cfg.noise_corpus {
            Some(p) => p.display().to_string(),
            None => "pink noise, seeded per clip".into(),
        },
        skipped: Vec::new(),
        failures: Vec::new(),
        samples_attempted: 0,
        samples_failed: 0,
        degraded: false,
    }
}

fn load(entries: &[(usize, &ManifestEntry)]) -> Vec<Result<Waveform>> {
    entries.par_iter().map(|(_, e)| read_wav(&e.path)).collect()
}

/// Watermark every clip, perturb watermarked and unwatermarked copies
/// over the grid, and detect with each clip's own payload.
///
/// Perturbation seeds depend on the clip and kind only, so every scheme
/// and parameter sees the same noise draws.
pub fn run_nobox(cfg: &RunConfig, corpus: &CorpusManifest, ctx: &RunContext) -> Result<EvalReport> {
    cfg.validate()?;
    if cfg.grid.is_empty() {
        return Err(Error::InvalidConfig("perturbation grid must be non-empty".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("corpus is empty".into()));
    }
    let chosen = match cfg.nobox_cap {
        Some(cap) => stratified_sample(corpus, cap, cfg.seed.derive("nobox-sample")),
        None => (0..corpus.len()).collect(),
    };
    let quality = ctx.quality();
    let mut meta = metadata(cfg, corpus, "nobox", chosen.clone(), &quality);
    let entries: Vec<(usize, &ManifestEntry)> = chosen.iter().map(|&i| (i, &corpus.entries[i])).collect();

    pool(cfg.jobs)?.install(|| {
        let clips = load(&entries);
        let mut out = Collector::new(cfg.seed.value());
        for g in &cfg.grid {
            if !ctx.perturber.supports(g.kind) {
                meta.skipped.push(format!("{}: codec `{}` not configured", g.kind.label(), g.kind.codec_name().unwrap_or("?")));
            }
        }
        for scfg in &cfg.schemes {
            let base = build_scheme(scfg)?;
            let prepared = prepare(base.as_ref(), cfg.seed, &entries, &clips);
            let (scheme, calibrated) = resolve_scheme(scfg, cfg.threshold, &prepared, &clips)?;
            meta.schemes.push(SchemeSummary {
                name: scheme.name().into(),
                rule: scheme.rule(),
                threshold: scheme.threshold(),
                calibrated,
            });
            for g in cfg.grid.iter().filter(|g| ctx.perturber.supports(g.kind)) {
                let kind_seed = cfg.seed.derive("nobox").derive(g.kind.label());
                for &param in &g.params {
                    let results: Vec<_> = (0..entries.len())
                        .into_par_iter()
                        .map(|k| {
                            let (clip, e) = entries[k];
                            let r = (|| {
                                let w = ok_ref(&prepared.payloads[k])?;
                                let sw = ok_ref(&prepared.watermarked[k])?;
                                let su = ok_ref(&clips[k])?;
                                let clip_seed = kind_seed.derive_index(clip as u64);
                                let spec = |seed: Seed| PerturbationSpec {
                                    noise_corpus: cfg.noise_corpus.clone(),
                                    ..PerturbationSpec::new(g.kind, param, seed)
                                };
                                let yw = ctx.perturber.apply(&spec(clip_seed), sw)?;
                                let yu = ctx.perturber.apply(&spec(clip_seed.derive("unwatermarked")), su)?;
                                let mut s = record(e, scheme.name(), g.kind.label(), param, clip);
                                s.detected_watermarked = Some(scheme.detect(&yw, w)?);
                                s.detected_unwatermarked = Some(scheme.detect(&yu, w)?);
                                (s.snr_db, s.quality) = pair_metrics(&quality, sw, &yw)?;
                                Ok((s, None))
                            })();
                            (clip, r)
                        })
                        .collect();
                    out.cell(scheme.name(), g.kind.label(), param, results);
                }
            }
        }
        Ok(out.finish(meta))
    })
}

/// One attack on one clip.
fn attack_clip(
    spec: &AttackSpec,
    scheme: &dyn WatermarkScheme,
    goal: AttackGoal,
    param: f64,
    s: &Waveform,
    bits: &WatermarkBits,
    seed: Seed,
) -> Result<Option<AttackResult>> {
    let r = match spec.method {
        AttackMethod::Whitebox => {
            let wcfg = WhiteboxConfig {
                variant: WhiteboxVariant::GradientDescent,
                ..spec.whitebox.with_budget(param)
            };
            match goal {
                AttackGoal::Removal => whitebox_remove(s, bits, scheme, &wcfg),
                AttackGoal::Forgery => whitebox_forge(s, bits, scheme, &wcfg),
            }
        }
        AttackMethod::Ifgsm => ifgsm(s, bits, goal, scheme, &spec.whitebox.with_budget(param)),
        AttackMethod::Hsja(domain) => {
            let mut oracle = SchemeOracle::new(scheme, bits.clone());
            let budget = spec.budget.with_iterations(param as usize);
            hsja(&mut oracle, s, goal, domain, &budget, seed)
        }
        AttackMethod::Square => {
            let mut oracle = SchemeOracle::new(scheme, bits.clone());
            square_attack(&mut oracle, s, goal, param, &spec.budget, seed).map(|o| o.result)
        }
    };
    match r {
        Ok(r) => Ok(Some(r)),
        // no evading starting point: the attack simply fails
        Err(Error::InitializationFailed) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Removal over a stratified watermarked subsample (FNR) and forgery
/// over a stratified unwatermarked subsample (FPR), per parameter.
///
/// Every attacked clip is re-detected independently of the attack's own
/// success flag. HSJA clips with no evading initializer count as failed
/// attacks, not failed samples.
pub fn run_attack(cfg: &RunConfig, corpus: &CorpusManifest, spec: &AttackSpec, ctx: &RunContext) -> Result<EvalReport> {
    cfg.validate()?;
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("corpus is empty".into()));
    }
    let subsets: Vec<(AttackGoal, Vec<usize>)> = spec
        .goals
        .iter()
        .map(|&g| (g, stratified_sample(corpus, cfg.attack_cap, cfg.seed.derive("attack-sample").derive(g.label()))))
        .collect();
    let mut chosen: Vec<usize> = subsets.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    chosen.sort_unstable();
    chosen.dedup();
    let quality = ctx.quality();
    let mut meta = metadata(cfg, corpus, "attack", chosen.clone(), &quality);
    meta.attack = Some(spec.clone());
    let entries: Vec<(usize, &ManifestEntry)> = chosen.iter().map(|&i| (i, &corpus.entries[i])).collect();
    let slot: BTreeMap<usize, usize> = chosen.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    pool(cfg.jobs)?.install(|| {
        let clips = load(&entries);
        let mut out = Collector::new(cfg.seed.value());
        for scfg in &cfg.schemes {
            let base = build_scheme(scfg)?;
            if spec.method.needs_gradients() && base.differentiable().is_none() {
                return Err(Error::GradientUnavailable(base.name().into()));
            }
            let prepared = prepare(base.as_ref(), cfg.seed, &entries, &clips);
            let (scheme, calibrated) = resolve_scheme(scfg, cfg.threshold, &prepared, &clips)?;
            meta.schemes.push(SchemeSummary {
                name: scheme.name().into(),
                rule: scheme.rule(),
                threshold: scheme.threshold(),
                calibrated,
            });
            for (goal, subset) in &subsets {
                let condition = spec.condition(*goal);
                let cond_seed = cfg.seed.derive("attack").derive(&condition);
                for &param in &spec.params {
                    let results: Vec<_> = subset
                        .par_iter()
                        .map(|&clip| {
                            let k = slot[&clip];
                            let e = entries[k].1;
                            let r = (|| {
                                let (s, bits) = match goal {
                                    AttackGoal::Removal => (
                                        ok_ref(&prepared.watermarked[k])?.clone(),
                                        ok_ref(&prepared.payloads[k])?.clone(),
                                    ),
                                    AttackGoal::Forgery => (
                                        ok_ref(&clips[k])?.clone(),
                                        WatermarkBits::random(
                                            scheme.payload_bits(),
                                            cfg.seed.derive("forge").derive_index(clip as u64),
                                        )?,
                                    ),
                                };
                                let seed = cond_seed.derive_index(clip as u64);
                                let result = attack_clip(spec, scheme.as_ref(), *goal, param, &s, &bits, seed)?;
                                let mut rec = record(e, scheme.name(), &condition, param, clip);
                                let (attacked, trace) = match &result {
                                    Some(r) => {
                                        (rec.snr_db, rec.quality) = pair_metrics(&quality, &s, &r.perturbed)?;
                                        rec.queries = Some(r.queries_used);
                                        let t = TraceRecord {
                                            scheme: scheme.name().into(),
                                            condition: condition.clone(),
                                            param,
                                            clip,
                                            queries_used: r.queries_used,
                                            trace: r.trace.clone(),
                                        };
                                        (&r.perturbed, Some(t))
                                    }
                                    None => (&s, None),
                                };
                                let detected = scheme.detect(attacked, &bits)?;
                                match goal {
                                    AttackGoal::Removal => rec.detected_watermarked = Some(detected),
                                    AttackGoal::Forgery => rec.detected_unwatermarked = Some(detected),
                                }
                                Ok((rec, trace))
                            })();
                            (clip, r)
                        })
                        .collect();
                    out.cell(scheme.name(), &condition, param, results);
                }
            }
        }
        Ok(out.finish(meta))
    })
}
