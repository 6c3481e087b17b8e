//! Attacks that only see a detector's answers: HSJA in the waveform and
//! spectrogram domains, and the ℓ∞ Square attack on STFT amplitudes.

mod hsja;
mod square;

pub use hsja::{hsja, HsjaDomain, BISECTION_STEPS, INIT_LADDER_DB, MAX_STEP_HALVINGS};
pub use square::{p_selection, square_attack, SquareOutcome, SQUARE_P_INIT};

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::schemes::{WatermarkBits, WatermarkScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_iterations: usize,
    pub max_queries: usize,
    /// Gradient-estimation batch at iteration 1; grows with `sqrt(t)`.
    pub grad_est_init: usize,
    pub grad_est_cap: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_iterations: 10_000,
            max_queries: 20_000_000,
            grad_est_init: 100,
            grad_est_cap: 1000,
        }
    }
}

impl OracleBudget {
    pub fn with_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || self.max_queries == 0
            || self.grad_est_init == 0
            || self.grad_est_cap == 0
        {
            return Err(Error::InvalidConfig("oracle budget fields must be positive".into()));
        }
        if self.grad_est_init > self.grad_est_cap {
            return Err(Error::InvalidConfig(
                "grad_est_init must not exceed grad_est_cap".into(),
            ));
        }
        Ok(())
    }

    /// Gradient-estimation batch size at iteration `t >= 1`.
    pub fn batch_size(&self, t: usize) -> usize {
        let b = (self.grad_est_init as f64 * (t.max(1) as f64).sqrt()) as usize;
        b.clamp(1, self.grad_est_cap)
    }
}

/// One detector response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAnswer {
    /// Bitwise accuracy against the ground truth, or `P_s`.
    pub score: f64,
    pub decision: bool,
}

/// A detector the attacker can query.
pub trait Oracle {
    fn query(&mut self, s: &Waveform) -> Result<OracleAnswer>;
}

impl<F> Oracle for F
where
    F: FnMut(&Waveform) -> Result<OracleAnswer>,
{
    fn query(&mut self, s: &Waveform) -> Result<OracleAnswer> {
        self(s)
    }
}

/// A scheme queried against a fixed ground-truth watermark.
pub struct SchemeOracle<'a> {
    scheme: &'a dyn WatermarkScheme,
    truth: WatermarkBits,
}

impl<'a> SchemeOracle<'a> {
    pub fn new(scheme: &'a dyn WatermarkScheme, truth: WatermarkBits) -> Self {
        SchemeOracle { scheme, truth }
    }
}

impl Oracle for SchemeOracle<'_> {
    fn query(&mut self, s: &Waveform) -> Result<OracleAnswer> {
        let outcome = self.scheme.decode(s, Some(&self.truth))?;
        Ok(OracleAnswer {
            score: outcome.score.unwrap_or(0.0),
            decision: outcome.decision,
        })
    }
}

/// Exact query accounting in front of an oracle.
pub(crate) struct Counted<'o> {
    oracle: &'o mut dyn Oracle,
    used: usize,
    limit: usize,
}

impl<'o> Counted<'o> {
    pub(crate) fn new(oracle: &'o mut dyn Oracle, limit: usize) -> Self {
        Counted {
            oracle,
            used: 0,
            limit,
        }
    }

    pub(crate) fn used(&self) -> usize {
        self.used
    }

    pub(crate) fn raise_limit(&mut self, limit: usize) {
        self.limit = self.limit.max(limit);
    }

    pub(crate) fn query(&mut self, s: &Waveform) -> Result<OracleAnswer> {
        if self.used >= self.limit {
            return Err(Error::BudgetExhausted(self.limit));
        }
        self.used += 1;
        let ans = self.oracle.query(s)?;
        if !ans.score.is_finite() {
            return Err(Error::Oracle(format!("non-finite score {}", ans.score)));
        }
        Ok(ans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_grows_with_sqrt_and_caps() {
        let b = OracleBudget::default();
        assert_eq!(b.batch_size(1), 100);
        assert_eq!(b.batch_size(4), 200);
        assert_eq!(b.batch_size(100), 1000);
        assert_eq!(b.batch_size(10_000), 1000);
    }

    #[test]
    fn budget_validation() {
        assert!(OracleBudget::default().validate().is_ok());
        let zero = OracleBudget {
            max_queries: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let inverted = OracleBudget {
            grad_est_init: 10,
            grad_est_cap: 5,
            ..Default::default()
        };
        assert!(inverted.validate().is_err());
    }

    #[test]
    fn counter_stops_at_limit_and_rejects_nan() {
        let s = Waveform::new(vec![0.1; 600], 16000).unwrap();
        let mut calls = 0;
        let mut o = |_: &Waveform| {
            calls += 1;
            Ok(OracleAnswer {
                score: 0.5,
                decision: true,
            })
        };
        let mut c = Counted::new(&mut o, 2);
        c.query(&s).unwrap();
        c.query(&s).unwrap();
        assert!(matches!(c.query(&s), Err(Error::BudgetExhausted(2))));
        assert_eq!(c.used(), 2);
        c.raise_limit(3);
        c.query(&s).unwrap();
        drop(c);
        assert_eq!(calls, 3);

        let mut bad = |_: &Waveform| {
            Ok(OracleAnswer {
                score: f64::NAN,
                decision: false,
            })
        };
        let mut c = Counted::new(&mut bad, 5);
        assert!(matches!(c.query(&s), Err(Error::Oracle(_))));
    }
}
