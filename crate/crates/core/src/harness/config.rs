use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::AttackGoal;
use crate::blackbox::{HsjaDomain, OracleBudget};
use crate::error::{Error, Result};
use crate::perturbations::PerturbationKind;
use crate::schemes::{SchemeConfig, SchemeKind};
use crate::whitebox::WhiteboxConfig;
use crate::Seed;

/// Default black-box and white-box subsample size per goal.
pub const DEFAULT_ATTACK_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Use each scheme config's threshold as given.
    Fixed,
    /// Calibrate on the clean corpus before the run.
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub kind: PerturbationKind,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schemes: Vec<SchemeConfig>,
    /// No-box perturbation grid.
    pub grid: Vec<GridEntry>,
    pub threshold: ThresholdMode,
    /// No-box clip cap; `None` runs the full corpus.
    pub nobox_cap: Option<usize>,
    /// Attack subsample size per goal.
    pub attack_cap: usize,
    pub seed: Seed,
    /// Background-noise WAV file or directory; pink noise when unset.
    #[serde(default)]
    pub noise_corpus: Option<PathBuf>,
    /// Worker threads; `None` uses every logical core.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// The three built-in schemes, scheme seeds derived from `seed`.
    pub fn builtin_schemes(seed: Seed) -> Vec<SchemeConfig> {
        [SchemeKind::SpreadSpectrum, SchemeKind::SyncPayload, SchemeKind::Probability]
            .into_iter()
            .map(|k| SchemeConfig::builtin(k, seed.derive("scheme")).expect("built-in kind"))
            .collect()
    }

    /// Every perturbation kind at its benchmark grid.
    pub fn table3_grid() -> Vec<GridEntry> {
        PerturbationKind::ALL
            .iter()
            .map(|&kind| GridEntry {
                kind,
                params: kind.grid().to_vec(),
            })
            .collect()
    }

    /// Built-in schemes over the full grid with calibrated thresholds.
    pub fn table3(seed: Seed) -> Self {
        RunConfig {
            schemes: Self::builtin_schemes(seed),
            grid: Self::table3_grid(),
            threshold: ThresholdMode::Calibrate,
            nobox_cap: None,
            attack_cap: DEFAULT_ATTACK_CAP,
            seed,
            noise_corpus: None,
            jobs: None,
        }
    }

    /// Checks shared by no-box and attack runs; `run_nobox` also needs a
    /// non-empty grid.
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("run needs at least one scheme".into()));
        }
        for s in &self.schemes {
            s.validate()?;
        }
        if self.grid.iter().any(|g| g.params.is_empty()) {
            return Err(Error::InvalidConfig("grid entries need at least one parameter".into()));
        }
        if self.nobox_cap == Some(0) || self.attack_cap == 0 {
            return Err(Error::InvalidConfig("sample caps must be >= 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "domain")]
pub enum AttackMethod {
    Hsja(HsjaDomain),
    Square,
    Whitebox,
    Ifgsm,
}

impl AttackMethod {
    pub fn label(&self) -> String {
        match self {
            AttackMethod::Hsja(d) => format!("hsja_{}", d.label()),
            AttackMethod::Square => "square".into(),
            AttackMethod::Whitebox => "whitebox".into(),
            AttackMethod::Ifgsm => "ifgsm".into(),
        }
    }

    /// `hsja` (spectrogram domain), `hsja_waveform`, `square`, `whitebox`, `ifgsm`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hsja" | "hsja_spectrogram" => Ok(AttackMethod::Hsja(HsjaDomain::Spectrogram)),
            "hsja_waveform" => Ok(AttackMethod::Hsja(HsjaDomain::Waveform)),
            "square" => Ok(AttackMethod::Square),
            "whitebox" => Ok(AttackMethod::Whitebox),
            "ifgsm" | "i_fgsm" => Ok(AttackMethod::Ifgsm),
            other => Err(Error::InvalidConfig(format!("unknown attack method `{other}`"))),
        }
    }

    pub fn needs_gradients(&self) -> bool {
        matches!(self, AttackMethod::Whitebox | AttackMethod::Ifgsm)
    }

    /// What the swept parameter means.
    pub fn param_name(&self) -> &'static str {
        match self {
            AttackMethod::Hsja(_) => "iterations",
            AttackMethod::Square => "linf_bound",
            AttackMethod::Whitebox | AttackMethod::Ifgsm => "snr_budget_db",
        }
    }

    /// Default sweep: SNR budgets for gradient attacks, ℓ∞ bounds for
    /// Square, a single iteration count for HSJA.
    pub fn default_params(&self, budget: &OracleBudget) -> Vec<f64> {
        match self {
            AttackMethod::Hsja(_) => vec![budget.max_iterations as f64],
            AttackMethod::Square => vec![0.05, 0.1, 0.15, 0.2],
            AttackMethod::Whitebox | AttackMethod::Ifgsm => vec![20.0, 30.0, 40.0, 50.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub method: AttackMethod,
    pub goals: Vec<AttackGoal>,
    /// SNR budgets, ℓ∞ bounds or HSJA iteration counts.
    pub params: Vec<f64>,
    /// Black-box budget; HSJA's iteration count comes from `params`,
    /// Square's from `max_iterations`.
    pub budget: OracleBudget,
    /// White-box settings; `snr_budget` comes from `params`.
    pub whitebox: WhiteboxConfig,
}

impl AttackSpec {
    pub fn new(method: AttackMethod) -> Self {
        let budget = OracleBudget::default();
        AttackSpec {
            method,
            goals: vec![AttackGoal::Removal, AttackGoal::Forgery],
            params: method.default_params(&budget),
            budget,
            whitebox: WhiteboxConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.goals.is_empty() || self.params.is_empty() {
            return Err(Error::InvalidConfig("attack grid must be non-empty".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("attack parameters must be finite".into()));
        }
        match self.method {
            AttackMethod::Hsja(_) => {
                if self.params.iter().any(|&p| p < 1.0 || p.fract() != 0.0) {
                    return Err(Error::InvalidConfig("HSJA iteration counts must be whole and >= 1".into()));
                }
                self.budget.validate()
            }
            AttackMethod::Square => {
                if self.params.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidConfig("ℓ∞ bounds must be >= 0".into()));
                }
                self.budget.validate()
            }
            AttackMethod::Whitebox | AttackMethod::Ifgsm => self.whitebox.validate(),
        }
    }

    pub fn condition(&self, goal: AttackGoal) -> String {
        format!("{}_{}", self.method.label(), goal.label())
    }
}
