use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::Seed;

/// Fixed-length bitstring payload, e.g. `1110110110010110`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WatermarkBits(Vec<bool>);

impl WatermarkBits {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidBits("bitstring must have at least one bit".into()));
        }
        Ok(WatermarkBits(bits))
    }

    /// Uniformly random bits of length `n`.
    pub fn random(n: usize, seed: Seed) -> Result<Self> {
        let mut rng = seed.rng();
        Self::new((0..n).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn complement(&self) -> WatermarkBits {
        WatermarkBits(self.0.iter().map(|b| !b).collect())
    }

    /// `self ∪ other` as bitstring concatenation.
    pub fn concat(&self, other: &WatermarkBits) -> WatermarkBits {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        WatermarkBits(v)
    }

    /// Sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<WatermarkBits> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidBits(format!(
                "slice {start}..{end} of a {}-bit string",
                self.len()
            )));
        }
        Ok(WatermarkBits(self.0[start..end].to_vec()))
    }

    pub fn with_flipped(&self, i: usize) -> WatermarkBits {
        let mut v = self.0.clone();
        v[i] = !v[i];
        WatermarkBits(v)
    }

    /// +1 for a set bit, -1 otherwise.
    pub fn polar(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
    }
}

impl FromStr for WatermarkBits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidBits(format!("unexpected character `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        WatermarkBits::new(bits)
    }
}

impl fmt::Display for WatermarkBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for WatermarkBits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WatermarkBits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let b: WatermarkBits = "1110110110010110".parse().unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(b.to_string(), "1110110110010110");
        assert!("10x1".parse::<WatermarkBits>().is_err());
        assert!("".parse::<WatermarkBits>().is_err());
    }

    #[test]
    fn concat_and_slice() {
        let a: WatermarkBits = "1100".parse().unwrap();
        let b: WatermarkBits = "01".parse().unwrap();
        let c = a.concat(&b);
        assert_eq!(c.to_string(), "110001");
        assert_eq!(c.slice(4, 6).unwrap(), b);
        assert!(c.slice(4, 9).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(v in proptest::collection::vec(any::<bool>(), 1..64)) {
            let b = WatermarkBits::new(v).unwrap();
            let back: WatermarkBits = b.to_string().parse().unwrap();
            prop_assert_eq!(&back, &b);
            prop_assert_eq!(back.complement().complement(), b);
        }
    }
}
