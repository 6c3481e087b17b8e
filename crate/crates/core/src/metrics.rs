//! Scalar measures: SNR, bitwise accuracy, detection rates, a spectral
//! quality proxy and Welch's two-tailed t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::audio::{mean_power, stft, StftParams, Waveform};
use crate::error::{Error, Result};
use crate::schemes::WatermarkBits;

/// Distance scale of the quality proxy, in dB of log-spectral distance.
///
/// Calibrated so that white Gaussian noise at 20 dB SNR on the synthetic
/// speech corpus scores 3.0: the mean distance `D20` measured over the
/// corpus gives `D0 = D20 / ln 2`. The `proxy_calibration` test in
/// `tests/quality_calibration.rs` re-runs the measurement.
pub const QUALITY_D0: f64 = 1.812;

/// Dynamic range (dB below the reference's loudest cell) over which the
/// proxy compares spectra; quieter reference cells are ignored.
pub const QUALITY_RANGE_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub snr_db: f64,
    pub proxy_moslike: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl DetectionCounts {
    /// Count a watermarked sample and whether the detector fired.
    pub fn record_watermarked(&mut self, detected: bool) {
        if detected {
            self.true_pos += 1;
        } else {
            self.false_neg += 1;
        }
    }

    pub fn record_unwatermarked(&mut self, detected: bool) {
        if detected {
            self.false_pos += 1;
        } else {
            self.true_neg += 1;
        }
    }

    pub fn fnr(&self) -> Result<f64> {
        let d = self.false_neg + self.true_pos;
        if d == 0 {
            return Err(Error::UndefinedRate("FNR"));
        }
        Ok(self.false_neg as f64 / d as f64)
    }

    pub fn fpr(&self) -> Result<f64> {
        let d = self.false_pos + self.true_neg;
        if d == 0 {
            return Err(Error::UndefinedRate("FPR"));
        }
        Ok(self.false_pos as f64 / d as f64)
    }
}

/// `(FNR, FPR)`.
pub fn detection_rates(counts: &DetectionCounts) -> Result<(f64, f64)> {
    Ok((counts.fnr()?, counts.fpr()?))
}

fn check_pair(reference: &Waveform, perturbed: &Waveform) -> Result<()> {
    if reference.len() != perturbed.len() {
        return Err(Error::Shape(format!(
            "reference has {} samples, perturbed has {}",
            reference.len(),
            perturbed.len()
        )));
    }
    if reference.sample_rate() != perturbed.sample_rate() {
        return Err(Error::Shape(format!(
            "sample rates differ: {} vs {}",
            reference.sample_rate(),
            perturbed.sample_rate()
        )));
    }
    Ok(())
}

/// `10 log10(P_ref / P_delta)` with `delta = perturbed - reference`,
/// mean power over the whole clip. `+inf` for an exact copy.
pub fn snr(reference: &Waveform, perturbed: &Waveform) -> Result<f64> {
    check_pair(reference, perturbed)?;
    let delta: Vec<f64> = perturbed
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(p, r)| p - r)
        .collect();
    snr_of_delta(reference.samples(), &delta)
}

pub fn snr_of_delta(reference: &[f64], delta: &[f64]) -> Result<f64> {
    let ps = mean_power(reference);
    if ps == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let pd = mean_power(delta);
    if pd == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ps / pd).log10())
}

pub fn bitwise_accuracy(a: &WatermarkBits, b: &WatermarkBits) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "bitstrings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let matching = a.iter().zip(b.iter()).filter(|(x, y)| x == y).count();
    Ok(matching as f64 / a.len() as f64)
}

/// Mean per-frame RMS log-spectral distance in dB between the STFT
/// magnitudes. Only cells of the reference within `QUALITY_RANGE_DB` of its
/// loudest cell count, and both spectra are floored at that level.
pub fn log_spectral_distance(reference: &Waveform, perturbed: &Waveform) -> Result<f64> {
    check_pair(reference, perturbed)?;
    let p = StftParams::default();
    let r = stft(reference, &p)?;
    let q = stft(perturbed, &p)?;
    let max_amp = r.amplitude().iter().fold(0.0f64, |m, &a| m.max(a));
    if max_amp == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let floor = max_amp * 10f64.powf(-QUALITY_RANGE_DB / 20.0);
    let mut total = 0.0;
    let mut frames = 0;
    for f in 0..r.frames() {
        let mut acc = 0.0;
        let mut cells = 0;
        for k in 0..r.bins() {
            let a = r.amp(f, k);
            if a < floor {
                continue;
            }
            let d = 20.0 * (q.amp(f, k).max(floor) / a).log10();
            acc += d * d;
            cells += 1;
        }
        if cells > 0 {
            total += (acc / cells as f64).sqrt();
            frames += 1;
        }
    }
    Ok(total / frames as f64)
}

/// Maps a log-spectral distance to the [1, 5] proxy scale.
pub fn proxy_from_distance(d: f64) -> f64 {
    (1.0 + 4.0 * (-d / QUALITY_D0).exp()).clamp(1.0, 5.0)
}

/// Spectral-similarity stand-in for a perceptual quality score.
/// Identical signals score exactly 5.
pub fn quality_proxy(reference: &Waveform, perturbed: &Waveform) -> Result<QualityScore> {
    let snr_db = snr(reference, perturbed)?;
    if reference.samples() == perturbed.samples() {
        return Ok(QualityScore {
            snr_db,
            proxy_moslike: 5.0,
        });
    }
    let d = log_spectral_distance(reference, perturbed)?;
    Ok(QualityScore {
        snr_db,
        proxy_moslike: proxy_from_distance(d),
    })
}

/// Welch's t statistic, degrees of freedom and two-tailed p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

pub fn welch_ttest(group_a: &[f64], group_b: &[f64]) -> Result<WelchTest> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let (ma, va) = mean_var(group_a);
    let (mb, vb) = mean_var(group_b);
    let na = group_a.len() as f64;
    let nb = group_b.len() as f64;
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if !(se2 > 0.0) || !se2.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| Error::DegenerateVariance)?;
    let p_value = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(WelchTest { t, df, p_value })
}

/// Two-tailed Welch p-value.
pub fn two_tailed_ttest(group_a: &[f64], group_b: &[f64]) -> Result<f64> {
    welch_ttest(group_a, group_b).map(|w| w.p_value)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Seed;
    use rand_distr::{Distribution, Normal, StandardNormal};
    use std::f64::consts::PI;

    fn sine(len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 16000.0).sin())
            .collect()
    }

    fn bits(s: &str) -> WatermarkBits {
        s.parse().unwrap()
    }

    #[test]
    fn snr_identity_and_equal_power() {
        let r = Waveform::new(sine(4000), 16000).unwrap();
        assert_eq!(snr(&r, &r).unwrap(), f64::INFINITY);
        let doubled = r.with_samples(r.samples().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!(snr(&r, &doubled).unwrap().abs() < 1e-12);
    }

    #[test]
    fn snr_with_noise_at_exact_power_ratio() {
        let x = sine(16000);
        let ps = mean_power(&x);
        let mut rng = Seed(5).rng();
        let mut n: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let scale = (0.01 * ps / mean_power(&n)).sqrt();
        n.iter_mut().for_each(|v| *v *= scale);
        let r = Waveform::new(x.clone(), 16000).unwrap();
        let p = r.add(&n).unwrap();
        assert!((snr(&r, &p).unwrap() - 20.0).abs() < 0.1);
    }

    #[test]
    fn snr_errors() {
        let r = Waveform::new(vec![0.0; 10], 16000).unwrap();
        let p = Waveform::new(vec![0.1; 10], 16000).unwrap();
        assert!(matches!(snr(&r, &p), Err(Error::UndefinedSnr)));
        let short = Waveform::new(vec![0.1; 9], 16000).unwrap();
        assert!(matches!(snr(&p, &short), Err(Error::Shape(_))));
    }

    #[test]
    fn bitwise_accuracy_cases() {
        let a = bits("1110110110010110");
        assert_eq!(bitwise_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(bitwise_accuracy(&a, &a.complement()).unwrap(), 0.0);
        let b = bits("1110110110010101");
        assert_eq!(bitwise_accuracy(&a, &b).unwrap(), 0.875);
        assert!(bitwise_accuracy(&a, &bits("101")).is_err());
    }

    #[test]
    fn rates() {
        let c = DetectionCounts {
            true_pos: 100,
            false_neg: 0,
            false_pos: 0,
            true_neg: 100,
        };
        assert_eq!(detection_rates(&c).unwrap(), (0.0, 0.0));
        let c = DetectionCounts {
            true_pos: 0,
            false_neg: 100,
            false_pos: 3,
            true_neg: 97,
        };
        assert_eq!(c.fnr().unwrap(), 1.0);
        let c = DetectionCounts {
            true_pos: 90,
            false_neg: 10,
            false_pos: 5,
            true_neg: 95,
        };
        let (fnr, fpr) = detection_rates(&c).unwrap();
        assert!((fnr - 0.10).abs() < 1e-15 && (fpr - 0.05).abs() < 1e-15);
        assert!(matches!(
            DetectionCounts::default().fnr(),
            Err(Error::UndefinedRate("FNR"))
        ));
    }

    /// (a, b, t, df, p) from scipy.stats.ttest_ind(a, b, equal_var=False).
    const WELCH_FIXTURES: [(&[f64], &[f64], f64, f64, f64); 5] = [
        (
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            -2.3763541031440183,
            6.9722557297949335,
            0.04928433820673049,
        ),
        (
            &[0.2, 0.4, 0.1, 0.3],
            &[0.9, 0.7, 0.8, 1.0, 0.6],
            -5.744562646538029,
            6.98076923076923,
            0.0007093070760374699,
        ),
        (
            &[10.0, 12.0, 9.0, 11.0, 13.0, 10.5],
            &[10.2, 11.8, 9.5, 10.9, 12.1, 10.0, 11.3],
            0.12789911365520748,
            8.604966795334052,
            0.9011677426325873,
        ),
        (
            &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            -1.8771542685302742,
            13.456331041133318,
            0.0823460379837187,
        ),
        (
            &[3.1, 2.9, 3.3, 3.0],
            &[1.2, 5.8, 2.4, 7.7, 0.3],
            -0.28704700772731107,
            4.02939222573664,
            0.7882332188293728,
        ),
    ];

    #[test]
    fn welch_matches_fixtures() {
        for (a, b, t, df, p) in WELCH_FIXTURES {
            let w = welch_ttest(a, b).unwrap();
            assert!((w.t - t).abs() < 1e-9, "t {} vs {t}", w.t);
            assert!((w.df - df).abs() < 1e-9, "df {} vs {df}", w.df);
            assert!((w.p_value - p).abs() < 1e-6, "p {} vs {p}", w.p_value);
            let swapped = welch_ttest(b, a).unwrap();
            assert!((swapped.p_value - w.p_value).abs() < 1e-12);
        }
    }

    #[test]
    fn ttest_identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(two_tailed_ttest(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ttest_separated_normals() {
        let mut rng = Seed(11).rng();
        let n0 = Normal::new(0.0, 1.0).unwrap();
        let n5 = Normal::new(5.0, 1.0).unwrap();
        let a: Vec<f64> = (0..1000).map(|_| n0.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..1000).map(|_| n5.sample(&mut rng)).collect();
        assert!(two_tailed_ttest(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn ttest_degenerate() {
        assert!(matches!(
            two_tailed_ttest(&[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(
            two_tailed_ttest(&[1.0], &[1.0, 2.0]),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn quality_identity_is_five() {
        let r = Waveform::new(sine(4000), 16000).unwrap();
        let q = quality_proxy(&r, &r).unwrap();
        assert_eq!(q.proxy_moslike, 5.0);
        assert_eq!(q.snr_db, f64::INFINITY);
    }
}
