use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "audiomark", version, about = "Audio watermark robustness benchmark")]
pub struct Cli {
    /// Top-level seed; every module derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: every logical core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// TOML file of default flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic speech-like corpus and its manifest.
    Corpus(CorpusArgs),
    /// Embed a payload into one WAV file.
    Embed(EmbedArgs),
    /// Detect a payload; exits 0 when detected, 1 otherwise.
    Detect(DetectArgs),
    /// Apply one perturbation or a pipeline file to one WAV file.
    Perturb(PerturbArgs),
    /// Pick the smallest threshold with FNR and FPR below 1% on a corpus.
    Calibrate(CalibrateArgs),
    /// Run the no-box perturbation benchmark.
    Bench(BenchArgs),
    /// Run a black-box or white-box attack benchmark.
    Attack(AttackArgs),
    /// Render SVG charts from a report CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    /// spread_spectrum, sync_payload, probability or external:NAME.
    #[arg(long)]
    pub scheme: Option<String>,

    /// Detection threshold (default: the scheme's own).
    #[arg(long)]
    pub tau: Option<f64>,

    #[command(flatten)]
    pub external: ExternalArgs,
}

#[derive(Debug, Args)]
pub struct ExternalArgs {
    /// Decision rule of external schemes.
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,

    /// Payload length of external schemes.
    #[arg(long)]
    pub payload_bits: Option<usize>,

    /// Per-request timeout of external schemes, in seconds.
    #[arg(long)]
    pub adapter_timeout: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    BitwiseAccuracy,
    SyncAndBitwiseAccuracy,
    Probability,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub clips: Option<usize>,

    /// Clip length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    pub input: PathBuf,
    pub output: PathBuf,

    #[command(flatten)]
    pub scheme: SchemeArgs,

    /// Payload as a 0/1 string of the scheme's length.
    #[arg(long)]
    pub bits: String,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub input: PathBuf,

    #[command(flatten)]
    pub scheme: SchemeArgs,

    /// Expected payload; optional for probability detectors.
    #[arg(long)]
    pub bits: Option<String>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    pub input: PathBuf,
    pub output: PathBuf,

    /// Perturbation kind, e.g. gaussian_noise.
    #[arg(long, conflicts_with = "pipeline", requires = "param")]
    pub kind: Option<String>,

    /// Key parameter of the kind.
    #[arg(long, requires = "kind")]
    pub param: Option<f64>,

    /// File with one `kind param` stage per line.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,

    /// Background-noise WAV file or directory.
    #[arg(long)]
    pub noise_corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Corpus manifest (JSON Lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    #[command(flatten)]
    pub scheme: SchemeArgs,

    /// Payload embedded in every clip (default: random from the seed).
    #[arg(long)]
    pub bits: Option<String>,

    /// Where to write the FNR/FPR-vs-threshold curve.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Table3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdArg {
    Fixed,
    Calibrate,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Corpus manifest; a 200-clip synthetic corpus is generated under
    /// `<out>/corpus` when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Comma-separated scheme names (default: the three built-in schemes).
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,

    #[arg(long, value_enum)]
    pub threshold: Option<ThresholdArg>,

    #[command(flatten)]
    pub external: ExternalArgs,

    /// Maximum number of clips evaluated.
    #[arg(long)]
    pub cap: Option<usize>,

    /// Background-noise WAV file or directory.
    #[arg(long)]
    pub noise_corpus: Option<PathBuf>,

    /// Comma-separated output formats: csv, json, svg.
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "table3")]
    pub suite: Suite,

    /// Restrict the grid to these comma-separated kinds.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,

    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalArg {
    Removal,
    Forgery,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleArg {
    PaperPower,
    AmplitudeExact,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// hsja, hsja_waveform, square, whitebox or ifgsm.
    #[arg(long)]
    pub method: String,

    #[arg(long, value_enum)]
    pub goal: Option<GoalArg>,

    /// SNR budgets in dB (whitebox, ifgsm).
    #[arg(long, value_delimiter = ',')]
    pub snr: Option<Vec<f64>>,

    /// ℓ∞ bounds (square).
    #[arg(long, value_delimiter = ',')]
    pub bound: Option<Vec<f64>>,

    /// Iteration count: the HSJA sweep value, Square's budget or the
    /// white-box step count.
    #[arg(long)]
    pub iterations: Option<usize>,

    #[arg(long)]
    pub max_queries: Option<usize>,

    #[arg(long)]
    pub grad_est_init: Option<usize>,

    #[arg(long)]
    pub grad_est_cap: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    #[arg(long, value_enum)]
    pub rescale: Option<RescaleArg>,

    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report CSV.
    #[arg(long)]
    pub input: PathBuf,

    /// Directory for the SVG files.
    #[arg(long)]
    pub out: PathBuf,
}
