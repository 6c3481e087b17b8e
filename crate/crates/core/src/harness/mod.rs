//! Evaluation harness: corpora, no-box and attack runs, group-gap
//! analysis and report emission.

mod analysis;
mod config;
mod corpus;
mod report;
mod run;

pub use analysis::{group_analysis, write_gaps_csv, GapMetric, GapRow, GAP_ALPHA, SMALL_SAMPLE};
pub use config::{AttackMethod, AttackSpec, GridEntry, RunConfig, ThresholdMode, DEFAULT_ATTACK_CAP};
pub use corpus::{
    generate_synthetic_corpus, synthetic_clip, synthetic_labels, AgeBand, Attribute, CorpusManifest,
    ManifestEntry, Sex, MANIFEST_FILE, SAMPLE_RATE, SYNTH_LANGUAGES,
};
pub use report::{
    emit_report, read_csv, render_svg, write_csv, write_svgs, EvalReport, FailureRecord, Metric,
    ReportFormat, ReportRow, RunMetadata, SampleRecord, SchemeSummary, TraceRecord, CSV_HEADER,
};
pub use run::{
    run_attack, run_nobox, stratified_sample, QualityTool, RunContext, DEGRADED_FRACTION,
    QUALITY_CMD_ENV,
};
