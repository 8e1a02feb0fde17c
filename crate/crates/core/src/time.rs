//! Simulated time.
//!
//! All simulator time is a count of microseconds since scenario start. There is
//! no wall clock anywhere in the crate.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const MICROS_PER_MILLI: u64 = 1_000;
pub const MICROS_PER_SECOND: u64 = 1_000_000;
pub const MICROS_PER_MINUTE: u64 = 60 * MICROS_PER_SECOND;
pub const MICROS_PER_HOUR: u64 = 60 * MICROS_PER_MINUTE;

/// A point in, or span of, simulated time in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * MICROS_PER_MILLI)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SECOND)
    }

    pub const fn from_mins(m: u64) -> Self {
        SimTime(m * MICROS_PER_MINUTE)
    }

    pub const fn from_hours(h: u64) -> Self {
        SimTime(h * MICROS_PER_HOUR)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SECOND as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn checked_mul(self, k: u64) -> Option<SimTime> {
        self.0.checked_mul(k).map(SimTime)
    }

    /// Renders the value as whole seconds with a six-digit microsecond fraction.
    pub fn secs_string(self) -> String {
        format!(
            "{}.{:06}",
            self.0 / MICROS_PER_SECOND,
            self.0 % MICROS_PER_SECOND
        )
    }

    /// Parses the `secs_string` rendering (or any plain decimal seconds value
    /// with at most six fractional digits).
    pub fn parse_secs(text: &str) -> Result<SimTime, Error> {
        parse_decimal_scaled(text, MICROS_PER_SECOND).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Human duration text: the largest unit among `h`, `m`, `s`, `ms`, `us` that
/// divides the value exactly.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let us = self.0;
        if us == 0 {
            return write!(f, "0s");
        }
        for (unit, scale) in [
            ("h", MICROS_PER_HOUR),
            ("m", MICROS_PER_MINUTE),
            ("s", MICROS_PER_SECOND),
            ("ms", MICROS_PER_MILLI),
        ] {
            if us.is_multiple_of(scale) {
                return write!(f, "{}{}", us / scale, unit);
            }
        }
        write!(f, "{us}us")
    }
}

impl FromStr for SimTime {
    type Err = Error;

    /// Accepts `<decimal><unit>` with unit one of `us`, `ms`, `s`, `m`, `h`.
    /// A bare number is read as seconds.
    fn from_str(text: &str) -> Result<Self, Error> {
        let t = text.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let scale = match unit.trim() {
            "" | "s" => MICROS_PER_SECOND,
            "us" => 1,
            "ms" => MICROS_PER_MILLI,
            "m" => MICROS_PER_MINUTE,
            "h" => MICROS_PER_HOUR,
            other => {
                return Err(Error::InvalidDuration {
                    text: text.to_string(),
                    reason: format!("unknown unit {other:?}"),
                })
            }
        };
        parse_decimal_scaled(num, scale)
            .map(SimTime)
            .map_err(|e| match e {
                Error::InvalidDuration { reason, .. } => Error::InvalidDuration {
                    text: text.to_string(),
                    reason,
                },
                other => other,
            })
    }
}

/// Exact decimal parse of `text * scale` into an integer. Fractions that do not
/// land on a whole microsecond are rejected rather than rounded.
fn parse_decimal_scaled(text: &str, scale: u64) -> Result<u64, Error> {
    let bad = |reason: &str| Error::InvalidDuration {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad("missing number"));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad("not a non-negative decimal"));
    }
    let int_val: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad("integer part overflows"))?
    };
    let mut total = int_val.checked_mul(scale).ok_or_else(|| bad("overflow"))?;
    let mut place = scale;
    for c in frac_part.chars() {
        let digit = c.to_digit(10).unwrap() as u64;
        if !place.is_multiple_of(10) {
            if digit != 0 {
                return Err(bad("finer than one microsecond"));
            }
            continue;
        }
        place /= 10;
        total = total
            .checked_add(digit * place)
            .ok_or_else(|| bad("overflow"))?;
    }
    Ok(total)
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl serde::de::Visitor<'_> for Visitor {
            type Value = SimTime;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a duration such as \"5s\", \"250ms\" or \"1.5h\", or a number of seconds")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<SimTime, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<SimTime, E> {
                v.checked_mul(MICROS_PER_SECOND)
                    .map(SimTime)
                    .ok_or_else(|| E::custom("duration overflows"))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<SimTime, E> {
                if v < 0 {
                    return Err(E::custom("duration must be non-negative"));
                }
                self.visit_u64(v as u64)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<SimTime, E> {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(E::custom("duration must be a finite non-negative number"));
                }
                let us = v * MICROS_PER_SECOND as f64;
                if us.fract() != 0.0 {
                    return Err(E::custom("duration finer than one microsecond"));
                }
                Ok(SimTime(us as u64))
            }
        }

        d.deserialize_any(Visitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!("5s".parse::<SimTime>().unwrap(), SimTime::from_secs(5));
        assert_eq!("2m".parse::<SimTime>().unwrap(), SimTime::from_secs(120));
        assert_eq!("1.5h".parse::<SimTime>().unwrap(), SimTime::from_mins(90));
        assert_eq!("10ms".parse::<SimTime>().unwrap(), SimTime::from_millis(10));
        assert_eq!("7us".parse::<SimTime>().unwrap(), SimTime::from_micros(7));
        assert_eq!("49.999".parse::<SimTime>().unwrap(), SimTime::from_micros(49_999_000));
        assert_eq!(".5s".parse::<SimTime>().unwrap(), SimTime::from_millis(500));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "s", "-1s", "1d", "1.2.3s", "0.0000001s", "abc"] {
            assert!(bad.parse::<SimTime>().is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn display_picks_exact_unit() {
        assert_eq!(SimTime::from_hours(2).to_string(), "2h");
        assert_eq!(SimTime::from_secs(90).to_string(), "90s");
        assert_eq!(SimTime::from_millis(1500).to_string(), "1500ms");
        assert_eq!(SimTime::from_micros(1_000_001).to_string(), "1000001us");
        assert_eq!(SimTime::ZERO.to_string(), "0s");
    }

    #[test]
    fn secs_string_round_trips() {
        let t = SimTime::from_micros(12_345_678);
        assert_eq!(t.secs_string(), "12.345678");
        assert_eq!(SimTime::parse_secs(&t.secs_string()).unwrap(), t);
    }

    proptest::proptest! {
        #[test]
        fn display_round_trips(us in 0u64..u64::MAX / 2) {
            let t = SimTime::from_micros(us);
            proptest::prop_assert_eq!(t.to_string().parse::<SimTime>().unwrap(), t);
            proptest::prop_assert_eq!(SimTime::parse_secs(&t.secs_string()).unwrap(), t);
        }
    }
}
