//! Exact decimal privacy amounts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SCALE_DIGITS: usize = 18;
const SCALE: u128 = 1_000_000_000_000_000_000;

/// A non-negative ε or δ held as an integer count of 10⁻¹⁸ units, so sums and
/// comparisons are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrivacyAmount(u128);

impl PrivacyAmount {
    pub const ZERO: PrivacyAmount = PrivacyAmount(0);

    /// Converts through the shortest decimal that round-trips `v`.
    pub fn from_f64(v: f64) -> Result<Self> {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidAmount(v.to_string()));
        }
        format!("{v}").parse()
    }

    pub fn to_f64(self) -> f64 {
        self.render(0).parse().expect("decimal renders as a float")
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Self) -> Result<Self> {
        self.0
            .checked_add(other.0)
            .map(PrivacyAmount)
            .ok_or_else(|| Error::InvalidAmount("overflow".into()))
    }

    /// Decimal rendering with at least `min_decimals` fractional digits.
    pub fn render(self, min_decimals: usize) -> String {
        let int = self.0 / SCALE;
        let frac = format!("{:0width$}", self.0 % SCALE, width = SCALE_DIGITS);
        let trimmed = frac.trim_end_matches('0');
        let digits = if trimmed.len() >= min_decimals {
            trimmed
        } else {
            &frac[..min_decimals.min(SCALE_DIGITS)]
        };
        if digits.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{digits}")
        }
    }

    /// ε rendering used in journals: at least three decimals.
    pub fn render_epsilon(self) -> String {
        self.render(3)
    }
}

impl fmt::Display for PrivacyAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(0))
    }
}

impl FromStr for PrivacyAmount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidAmount(s.to_string());
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty()
            || frac.len() > SCALE_DIGITS
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || (s.contains('.') && frac.is_empty())
        {
            return Err(bad());
        }
        let int: u128 = int.parse().map_err(|_| bad())?;
        let frac_units: u128 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<width$}", width = SCALE_DIGITS).parse().map_err(|_| bad())?
        };
        int.checked_mul(SCALE)
            .and_then(|v| v.checked_add(frac_units))
            .map(PrivacyAmount)
            .ok_or_else(bad)
    }
}

impl Serialize for PrivacyAmount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.render(0))
    }
}

impl<'de> Deserialize<'de> for PrivacyAmount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::iter::Sum for PrivacyAmount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        PrivacyAmount(iter.map(|a| a.0).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_render() {
        let a: PrivacyAmount = "3".parse().unwrap();
        assert_eq!(a.render_epsilon(), "3.000");
        assert_eq!(a.to_string(), "3");
        assert_eq!(PrivacyAmount::ZERO.to_string(), "0");
        assert_eq!(PrivacyAmount::from_f64(0.1).unwrap().render_epsilon(), "0.100");
        assert_eq!(PrivacyAmount::from_f64(1e-5).unwrap().to_string(), "0.00001");
        assert_eq!(PrivacyAmount::from_f64(0.0005).unwrap().render_epsilon(), "0.0005");
        for bad in ["", ".5", "1.", "-1", "1e-3", "0.0000000000000000001", "abc"] {
            assert!(bad.parse::<PrivacyAmount>().is_err(), "{bad}");
        }
        assert!(PrivacyAmount::from_f64(f64::INFINITY).is_err());
        assert!(PrivacyAmount::from_f64(-0.1).is_err());
    }

    #[test]
    fn decimal_sums_are_exact() {
        let tenth = PrivacyAmount::from_f64(0.1).unwrap();
        let total: PrivacyAmount = std::iter::repeat(tenth).take(7).sum();
        assert_eq!(total, PrivacyAmount::from_f64(0.7).unwrap());
        let a = PrivacyAmount::from_f64(0.1).unwrap();
        let b = PrivacyAmount::from_f64(0.2).unwrap();
        assert_eq!(a.checked_add(b).unwrap(), PrivacyAmount::from_f64(0.3).unwrap());
        assert_ne!(0.1 + 0.2, 0.3);
    }

    proptest! {
        #[test]
        fn f64_round_trip(v in 0.0f64..1e6) {
            if let Ok(a) = PrivacyAmount::from_f64(v) {
                prop_assert_eq!(a.to_f64(), v);
            }
        }

        #[test]
        fn string_round_trip(units in 0u128..10u128.pow(24)) {
            let a = PrivacyAmount(units);
            prop_assert_eq!(a.to_string().parse::<PrivacyAmount>().unwrap(), a);
            prop_assert_eq!(a.render_epsilon().parse::<PrivacyAmount>().unwrap(), a);
        }
    }
}
