//! Group-gap analysis on per-clip detection indicators.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{AgeBand, Attribute, Sex};
use super::report::{EvalReport, SampleRecord};
use crate::error::{Error, Result};
use crate::metrics::welch_ttest;

/// Significance level of the two-tailed tests.
pub const GAP_ALPHA: f64 = 0.05;

/// Groups smaller than this are flagged `small_sample`.
pub const SMALL_SAMPLE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMetric {
    Fnr,
    Fpr,
}

impl GapMetric {
    pub fn label(&self) -> &'static str {
        match self {
            GapMetric::Fnr => "fnr",
            GapMetric::Fpr => "fpr",
        }
    }

    /// 1 for an error (a miss or a false alarm), 0 otherwise.
    fn indicator(&self, s: &SampleRecord) -> Option<f64> {
        match self {
            GapMetric::Fnr => s.detected_watermarked.map(|d| if d { 0.0 } else { 1.0 }),
            GapMetric::Fpr => s.detected_unwatermarked.map(|d| if d { 1.0 } else { 0.0 }),
        }
    }
}

/// One pairwise comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub scheme: String,
    pub condition: String,
    /// `None` for the row pooled over every parameter of the condition.
    pub param: Option<f64>,
    pub metric: GapMetric,
    pub attribute: Attribute,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub rate_a: f64,
    pub rate_b: f64,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub small_sample: bool,
    /// Why no p-value was computed.
    pub note: Option<String>,
}

/// Pairwise Welch tests between the groups of `attribute`, per
/// `(scheme, condition, param)` and pooled over parameters, for FNR and
/// FPR indicators.
pub fn group_analysis(report: &EvalReport, attribute: Attribute) -> Vec<GapRow> {
    // keyed by first appearance so the output follows the report order
    let mut cells: Vec<((String, String), Vec<&SampleRecord>)> = Vec::new();
    for s in &report.samples {
        let key = (s.scheme.clone(), s.condition.clone());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(s),
            None => cells.push((key, vec![s])),
        }
    }
    let mut out = Vec::new();
    for ((scheme, condition), samples) in &cells {
        for metric in [GapMetric::Fnr, GapMetric::Fpr] {
            if samples.iter().all(|s| metric.indicator(s).is_none()) {
                continue;
            }
            let mut params: Vec<f64> = Vec::new();
            for s in samples {
                if !params.contains(&s.param) {
                    params.push(s.param);
                }
            }
            for &p in &params {
                let subset: Vec<&SampleRecord> = samples.iter().copied().filter(|s| s.param == p).collect();
                out.extend(compare(scheme, condition, Some(p), metric, attribute, &subset));
            }
            if params.len() > 1 {
                out.extend(compare(scheme, condition, None, metric, attribute, samples));
            }
        }
    }
    out
}

fn group_order(attribute: Attribute, g: &str) -> (usize, String) {
    let rank = match attribute {
        Attribute::Sex => Sex::ALL.iter().position(|s| s.label() == g),
        Attribute::Age => AgeBand::ALL.iter().position(|a| a.label() == g),
        Attribute::Language => Some(0),
    };
    (rank.unwrap_or(usize::MAX), g.to_string())
}

fn compare(
    scheme: &str,
    condition: &str,
    param: Option<f64>,
    metric: GapMetric,
    attribute: Attribute,
    samples: &[&SampleRecord],
) -> Vec<GapRow> {
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for s in samples {
        if let Some(v) = metric.indicator(s) {
            let g = s.group_value(attribute);
            groups.entry(group_order(attribute, g)).or_default().push(v);
        }
    }
    let groups: Vec<(String, Vec<f64>)> = groups.into_iter().map(|((_, g), v)| (g, v)).collect();
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (ga, a) = &groups[i];
            let (gb, b) = &groups[j];
            let mut row = GapRow {
                scheme: scheme.into(),
                condition: condition.into(),
                param,
                metric,
                attribute,
                group_a: ga.clone(),
                group_b: gb.clone(),
                n_a: a.len(),
                n_b: b.len(),
                rate_a: a.iter().sum::<f64>() / a.len() as f64,
                rate_b: b.iter().sum::<f64>() / b.len() as f64,
                t: None,
                df: None,
                p_value: None,
                significant: false,
                small_sample: a.len() < SMALL_SAMPLE || b.len() < SMALL_SAMPLE,
                note: None,
            };
            if a.len() < 2 || b.len() < 2 {
                row.note = Some("fewer than 2 samples".into());
            } else {
                match welch_ttest(a, b) {
                    Ok(w) => {
                        row.t = Some(w.t);
                        row.df = Some(w.df);
                        row.p_value = Some(w.p_value);
                        row.significant = w.p_value < GAP_ALPHA;
                    }
                    Err(Error::DegenerateVariance) => row.note = Some("degenerate variance".into()),
                    Err(e) => row.note = Some(e.to_string()),
                }
            }
            out.push(row);
        }
    }
    out
}

#[derive(Serialize)]
struct GapCsvRow<'a> {
    scheme: &'a str,
    condition: &'a str,
    param: String,
    metric: &'static str,
    attribute: &'static str,
    group_a: &'a str,
    group_b: &'a str,
    n_a: usize,
    n_b: usize,
    rate_a: f64,
    rate_b: f64,
    t: Option<f64>,
    df: Option<f64>,
    p_value: Option<f64>,
    significant: bool,
    small_sample: bool,
    note: Option<&'a str>,
}

pub fn write_gaps_csv(gaps: &[GapRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if gaps.is_empty() {
        w.write_record([
            "scheme", "condition", "param", "metric", "attribute", "group_a", "group_b", "n_a", "n_b",
            "rate_a", "rate_b", "t", "df", "p_value", "significant", "small_sample", "note",
        ])?;
    }
    for g in gaps {
        w.serialize(GapCsvRow {
            scheme: &g.scheme,
            condition: &g.condition,
            param: g.param.map_or_else(|| "pooled".into(), |p| p.to_string()),
            metric: g.metric.label(),
            attribute: g.attribute.label(),
            group_a: &g.group_a,
            group_b: &g.group_b,
            n_a: g.n_a,
            n_b: g.n_b,
            rate_a: g.rate_a,
            rate_b: g.rate_b,
            t: g.t,
            df: g.df,
            p_value: g.p_value,
            significant: g.significant,
            small_sample: g.small_sample,
            note: g.note.as_deref(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::RunMetadata;
    use crate::harness::{RunConfig, ThresholdMode};
    use crate::Seed;

    fn report(samples: Vec<SampleRecord>) -> EvalReport {
        EvalReport {
            rows: Vec::new(),
            metadata: RunMetadata {
                tool_version: "test".into(),
                run_kind: "nobox".into(),
                seed: 0,
                stft: Default::default(),
                schemes: Vec::new(),
                config: RunConfig {
                    threshold: ThresholdMode::Fixed,
                    ..RunConfig::table3(Seed(0))
                },
                attack: None,
                corpus_manifest: None,
                corpus_clips: 0,
                clips_evaluated: Vec::new(),
                quality_metric: String::new(),
                background_noise: String::new(),
                skipped: Vec::new(),
                failures: Vec::new(),
                samples_attempted: 0,
                samples_failed: 0,
                degraded: false,
            },
            samples,
            traces: Vec::new(),
        }
    }

    fn sample(clip: usize, sex: Sex, param: f64, miss: bool) -> SampleRecord {
        SampleRecord {
            scheme: "ss".into(),
            condition: "gaussian_noise".into(),
            param,
            clip,
            sex,
            age: AgeBand::ALL[clip % 4],
            language: "lang0".into(),
            detected_watermarked: Some(!miss),
            detected_unwatermarked: None,
            snr_db: None,
            quality: None,
            queries: None,
        }
    }

    #[test]
    fn identical_groups_give_p_one() {
        let mut s = Vec::new();
        for i in 0..40 {
            s.push(sample(2 * i, Sex::Male, 5.0, i % 3 == 0));
            s.push(sample(2 * i + 1, Sex::Female, 5.0, i % 3 == 0));
        }
        let gaps = group_analysis(&report(s), Attribute::Sex);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].p_value, Some(1.0));
        assert!(!gaps[0].significant);
        assert!(!gaps[0].small_sample);
        assert_eq!((gaps[0].group_a.as_str(), gaps[0].group_b.as_str()), ("male", "female"));
    }

    #[test]
    fn per_param_and_pooled_rows_with_guards() {
        let mut s = Vec::new();
        for i in 0..10 {
            s.push(sample(i, if i < 5 { Sex::Male } else { Sex::Female }, 5.0, i >= 5));
            s.push(sample(i, if i < 5 { Sex::Male } else { Sex::Female }, 10.0, false));
        }
        let gaps = group_analysis(&report(s), Attribute::Sex);
        let params: Vec<Option<f64>> = gaps.iter().map(|g| g.param).collect();
        assert_eq!(params, [Some(5.0), Some(10.0), None]);
        // all-miss vs all-hit and all-hit vs all-hit have no variance
        assert_eq!(gaps[0].note.as_deref(), Some("degenerate variance"));
        assert_eq!(gaps[1].note.as_deref(), Some("degenerate variance"));
        assert!(gaps.iter().all(|g| g.small_sample));
        // pooled: male 0/10 misses, female 5/10
        assert_eq!(gaps[2].rate_b, 0.5);
        assert!(gaps[2].p_value.is_some());
    }

    #[test]
    fn single_sample_groups_are_not_tested() {
        let s = vec![sample(0, Sex::Male, 5.0, true), sample(1, Sex::Female, 5.0, false), sample(3, Sex::Female, 5.0, true)];
        let gaps = group_analysis(&report(s), Attribute::Sex);
        assert_eq!(gaps[0].note.as_deref(), Some("fewer than 2 samples"));
        assert_eq!(gaps[0].p_value, None);
    }
}
