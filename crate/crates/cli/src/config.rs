//! Config-file overlay.
//!
//! A TOML file of `key = value` lines named like the long flags (with
//! underscores). Values fill in flags that were not given on the
//! command line:
//!
//! ```toml
//! seed = 7
//! jobs = 4
//! schemes = ["spread_spectrum", "probability"]
//! threshold = "calibrate"
//! snr = [20.0, 30.0]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use audiomark_core::{Error, Result};
use serde::Deserialize;

use crate::cli::{GoalArg, RescaleArg, RuleArg, ThresholdArg};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub scheme: Option<String>,
    pub schemes: Option<Vec<String>>,
    pub tau: Option<f64>,
    pub rule: Option<RuleArg>,
    pub payload_bits: Option<usize>,
    pub adapter_timeout: Option<f64>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub clips: Option<usize>,
    pub duration: Option<f64>,
    pub threshold: Option<ThresholdArg>,
    pub cap: Option<usize>,
    pub noise_corpus: Option<PathBuf>,
    pub format: Option<Vec<String>>,
    pub kinds: Option<Vec<String>>,
    pub goal: Option<GoalArg>,
    pub snr: Option<Vec<f64>>,
    pub bound: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub max_queries: Option<usize>,
    pub grad_est_init: Option<usize>,
    pub grad_est_cap: Option<usize>,
    pub learning_rate: Option<f64>,
    pub rescale: Option<RescaleArg>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
