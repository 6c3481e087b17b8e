use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{group_analysis, write_gaps_csv};
use super::config::{AttackSpec, RunConfig};
use super::corpus::{AgeBand, Attribute, Sex};
use crate::attack::TracePoint;
use crate::audio::StftParams;
use crate::error::{Error, Result};
use crate::schemes::DecisionRule;

pub const CSV_HEADER: &str = "scheme,condition,param,group,n,fnr,fpr,mean_snr_db,mean_quality,seed";

/// One aggregate line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scheme: String,
    pub condition: String,
    pub param: f64,
    /// `overall`, `sex=…`, `age=…` or `language=…`.
    pub group: String,
    pub n: usize,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub mean_snr_db: Option<f64>,
    pub mean_quality: Option<f64>,
    pub seed: u64,
}

/// Per-clip outcome; the unit of the group t-tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scheme: String,
    pub condition: String,
    pub param: f64,
    pub clip: usize,
    pub sex: Sex,
    pub age: AgeBand,
    pub language: String,
    /// Detector decision on the perturbed watermarked clip.
    pub detected_watermarked: Option<bool>,
    /// Detector decision on the perturbed unwatermarked clip.
    pub detected_unwatermarked: Option<bool>,
    pub snr_db: Option<f64>,
    pub quality: Option<f64>,
    pub queries: Option<usize>,
}

impl SampleRecord {
    pub fn group_value(&self, attr: Attribute) -> &str {
        match attr {
            Attribute::Sex => self.sex.label(),
            Attribute::Age => self.age.label(),
            Attribute::Language => &self.language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub scheme: String,
    pub condition: String,
    pub param: f64,
    pub clip: usize,
    pub queries_used: usize,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub scheme: String,
    pub condition: String,
    pub param: Option<f64>,
    pub clip: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub name: String,
    pub rule: DecisionRule,
    pub threshold: f64,
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    /// `nobox` or `attack`.
    pub run_kind: String,
    pub seed: u64,
    pub stft: StftParams,
    pub schemes: Vec<SchemeSummary>,
    pub config: RunConfig,
    pub attack: Option<AttackSpec>,
    pub corpus_manifest: Option<PathBuf>,
    pub corpus_clips: usize,
    /// Clip indices evaluated (the stratified subsample for attacks).
    pub clips_evaluated: Vec<usize>,
    pub quality_metric: String,
    pub background_noise: String,
    /// Grid entries that could not run, with the reason.
    pub skipped: Vec<String>,
    pub failures: Vec<FailureRecord>,
    pub samples_attempted: usize,
    pub samples_failed: usize,
    /// More than 10% of samples failed.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub metadata: RunMetadata,
    pub samples: Vec<SampleRecord>,
    pub traces: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::InvalidConfig(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fnr,
    Fpr,
    MeanSnr,
    MeanQuality,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Fnr => "fnr",
            Metric::Fpr => "fpr",
            Metric::MeanSnr => "mean_snr_db",
            Metric::MeanQuality => "mean_quality",
        }
    }

    pub fn of(&self, row: &ReportRow) -> Option<f64> {
        match self {
            Metric::Fnr => row.fnr,
            Metric::Fpr => row.fpr,
            Metric::MeanSnr => row.mean_snr_db,
            Metric::MeanQuality => row.mean_quality,
        }
    }

    fn is_rate(&self) -> bool {
        matches!(self, Metric::Fnr | Metric::Fpr)
    }
}

/// Overall row plus one row per non-empty attribute group, for one
/// `(scheme, condition, param)` cell.
pub(crate) fn aggregate(samples: &[SampleRecord], seed: u64) -> Vec<ReportRow> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let mut rows = vec![row_for(first, "overall".into(), samples.iter(), seed)];
    for attr in Attribute::ALL {
        let mut groups: BTreeMap<String, Vec<&SampleRecord>> = BTreeMap::new();
        for s in samples {
            groups.entry(s.group_value(attr).to_string()).or_default().push(s);
        }
        let mut keys: Vec<&String> = groups.keys().collect();
        // enum order for the closed vocabularies, lexical for languages
        keys.sort_by_key(|k| match attr {
            Attribute::Sex => Sex::ALL.iter().position(|s| s.label() == k.as_str()).unwrap_or(usize::MAX),
            Attribute::Age => AgeBand::ALL.iter().position(|a| a.label() == k.as_str()).unwrap_or(usize::MAX),
            Attribute::Language => 0,
        });
        for k in keys {
            let group = format!("{}={k}", attr.label());
            rows.push(row_for(first, group, groups[k].iter().copied(), seed));
        }
    }
    rows
}

fn row_for<'a>(
    head: &SampleRecord,
    group: String,
    samples: impl Iterator<Item = &'a SampleRecord>,
    seed: u64,
) -> ReportRow {
    let samples: Vec<&SampleRecord> = samples.collect();
    let rate = |f: &dyn Fn(&SampleRecord) -> Option<bool>, hit: bool| {
        let v: Vec<bool> = samples.iter().filter_map(|s| f(s)).collect();
        (!v.is_empty()).then(|| v.iter().filter(|&&d| d == hit).count() as f64 / v.len() as f64)
    };
    let mean = |f: &dyn Fn(&SampleRecord) -> Option<f64>| {
        let v: Vec<f64> = samples.iter().filter_map(|s| f(s)).filter(|x| x.is_finite()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    ReportRow {
        scheme: head.scheme.clone(),
        condition: head.condition.clone(),
        param: head.param,
        group,
        n: samples.len(),
        fnr: rate(&|s| s.detected_watermarked, false),
        fpr: rate(&|s| s.detected_unwatermarked, true),
        mean_snr_db: mean(&|s| s.snr_db),
        mean_quality: mean(&|s| s.quality),
        seed,
    }
}

pub fn write_csv(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected report header `{}`",
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Write the requested formats into `dir` and `run.json` beside them.
///
/// CSV: `report.csv`, and `gaps.csv` from the per-sample records. JSON:
/// `report.json` (rows and metadata), `samples.jsonl`, `traces.jsonl`.
/// SVG: one chart per condition and rate metric.
pub fn emit_report(report: &EvalReport, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        let p = dir.join("report.csv");
        write_csv(&report.rows, &p)?;
        written.push(p);
        if !report.samples.is_empty() {
            let gaps: Vec<_> = Attribute::ALL
                .into_iter()
                .flat_map(|a| group_analysis(report, a))
                .collect();
            let p = dir.join("gaps.csv");
            write_gaps_csv(&gaps, &p)?;
            written.push(p);
        }
    }
    if formats.contains(&ReportFormat::Json) {
        #[derive(Serialize)]
        struct Mirror<'a> {
            metadata: &'a RunMetadata,
            rows: &'a [ReportRow],
        }
        let p = dir.join("report.json");
        let mirror = Mirror {
            metadata: &report.metadata,
            rows: &report.rows,
        };
        fs::write(&p, serde_json::to_string_pretty(&mirror)?)?;
        written.push(p);
        let p = dir.join("samples.jsonl");
        write_jsonl(&report.samples, &p)?;
        written.push(p);
        if !report.traces.is_empty() {
            let p = dir.join("traces.jsonl");
            write_jsonl(&report.traces, &p)?;
            written.push(p);
        }
    }
    if formats.contains(&ReportFormat::Svg) {
        written.extend(write_svgs(&report.rows, dir)?);
    }
    let p = dir.join("run.json");
    fs::write(&p, serde_json::to_string_pretty(&report.metadata)?)?;
    written.push(p);
    Ok(written)
}

/// One SVG per condition and rate metric present, from the overall rows.
pub fn write_svgs(rows: &[ReportRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut conditions: Vec<&str> = Vec::new();
    for r in rows {
        if !conditions.contains(&r.condition.as_str()) {
            conditions.push(&r.condition);
        }
    }
    let mut written = Vec::new();
    for c in conditions {
        for metric in [Metric::Fnr, Metric::Fpr] {
            if !rows.iter().any(|r| r.condition == c && metric.of(r).is_some()) {
                continue;
            }
            let p = dir.as_ref().join(format!("{c}_{}.svg", metric.label()));
            fs::write(&p, render_svg(rows, c, metric)?)?;
            written.push(p);
        }
    }
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 50.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of `metric` against the parameter for `condition`, one
/// polyline per scheme (overall group only).
pub fn render_svg(rows: &[ReportRow], condition: &str, metric: Metric) -> Result<String> {
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for r in rows.iter().filter(|r| r.condition == condition && r.group == "overall") {
        let Some(y) = metric.of(r) else { continue };
        if !y.is_finite() {
            continue;
        }
        match series.iter_mut().find(|(s, _)| *s == r.scheme) {
            Some((_, pts)) => pts.push((r.param, y)),
            None => series.push((&r.scheme, vec![(r.param, y)])),
        }
    }
    if series.is_empty() {
        return Err(Error::EmptyReport);
    }
    for (_, pts) in series.iter_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if metric.is_rate() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 == x0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 == y0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{} vs param: {}</text>"#,
        W / 2.0,
        metric.label(),
        xml_escape(condition)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}"/></g>"#,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            px(xv),
            H - MARGIN + 14.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            MARGIN - 4.0,
            py(yv) + 3.0,
            fmt_tick(yv)
        );
    }
    for (i, (scheme, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-scheme="{}" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            xml_escape(scheme),
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{colour}">{}</text>"#,
            W - MARGIN - 110.0,
            MARGIN + 12.0 * i as f64,
            xml_escape(scheme)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
