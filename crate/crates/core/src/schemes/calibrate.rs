use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DecisionRule, DetectionOutcome, WatermarkBits, WatermarkScheme};
use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Both error rates must fall strictly below this.
pub const TARGET_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// FNR and FPR at every candidate threshold.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<CurvePoint>,
}

impl std::fmt::Debug for CalibrationCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // the full grid is hundreds of points; show its extent and best point
        let best = self
            .points
            .iter()
            .min_by(|a, b| a.fnr.max(a.fpr).total_cmp(&b.fnr.max(b.fpr)));
        f.debug_struct("CalibrationCurve")
            .field("points", &self.points.len())
            .field("best", &best)
            .finish()
    }
}

impl CalibrationCurve {
    /// Smallest threshold with both rates below [`TARGET_RATE`].
    pub fn smallest_feasible(&self) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.fnr < TARGET_RATE && p.fpr < TARGET_RATE)
            .map(|p| p.tau)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `0, 1/400, ..., 1`; contains every `j/16` and `j/100`.
pub fn default_grid() -> Vec<f64> {
    (0..=400).map(|i| i as f64 / 400.0).collect()
}

/// Sweep `grid` over pre-decoded outcomes.
///
/// Returns the smallest feasible threshold with the curve, or
/// [`Error::CalibrationInfeasible`] carrying the curve.
pub fn calibrate_outcomes(
    rule: DecisionRule,
    watermarked: &[DetectionOutcome],
    unwatermarked: &[DetectionOutcome],
    grid: &[f64],
) -> Result<(f64, CalibrationCurve)> {
    if watermarked.is_empty() {
        return Err(Error::UndefinedRate("FNR"));
    }
    if unwatermarked.is_empty() {
        return Err(Error::UndefinedRate("FPR"));
    }
    if grid.is_empty() || grid.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::InvalidConfig(
            "calibration grid must be non-empty and ascending".into(),
        ));
    }
    let points = grid
        .iter()
        .map(|&tau| {
            let misses = watermarked.iter().filter(|o| !rule.decide(o, tau)).count();
            let alarms = unwatermarked.iter().filter(|o| rule.decide(o, tau)).count();
            CurvePoint {
                tau,
                fnr: misses as f64 / watermarked.len() as f64,
                fpr: alarms as f64 / unwatermarked.len() as f64,
            }
        })
        .collect();
    let curve = CalibrationCurve { points };
    match curve.smallest_feasible() {
        Some(tau) => Ok((tau, curve)),
        None => Err(Error::CalibrationInfeasible { curve }),
    }
}

/// Decode both corpora against `w` and calibrate the scheme's threshold.
pub fn calibrate_threshold(
    scheme: &dyn WatermarkScheme,
    watermarked: &[Waveform],
    unwatermarked: &[Waveform],
    w: &WatermarkBits,
    grid: &[f64],
) -> Result<(f64, CalibrationCurve)> {
    let decode = |clips: &[Waveform]| -> Result<Vec<DetectionOutcome>> {
        clips.iter().map(|s| scheme.decode(s, Some(w))).collect()
    };
    let wm = decode(watermarked)?;
    let un = decode(unwatermarked)?;
    calibrate_outcomes(scheme.rule(), &wm, &un, grid)
}
