//! Integer time base.
//!
//! All instants and durations are signed femtosecond counts. Quantities are
//! configured and reported in picoseconds.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub const FS_PER_PS: i64 = 1_000;

/// A point in time or a duration, in femtoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Time(pub i64);

impl Time {
    pub const ZERO: Time = Time(0);
    pub const MIN: Time = Time(i64::MIN);
    pub const MAX: Time = Time(i64::MAX);

    pub const fn from_fs(fs: i64) -> Self {
        Time(fs)
    }

    pub const fn from_ps_int(ps: i64) -> Self {
        Time(ps * FS_PER_PS)
    }

    /// Rounds to the nearest femtosecond.
    pub fn from_ps(ps: f64) -> Self {
        Time((ps * FS_PER_PS as f64).round() as i64)
    }

    pub fn from_ns(ns: f64) -> Self {
        Self::from_ps(ns * 1e3)
    }

    pub const fn fs(self) -> i64 {
        self.0
    }

    pub fn ps(self) -> f64 {
        self.0 as f64 / FS_PER_PS as f64
    }

    pub fn abs(self) -> Self {
        Time(self.0.abs())
    }

    /// Fixed three-decimal picosecond text, exact for every femtosecond value.
    pub fn ps_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        format!("{sign}{}.{:03}", a / FS_PER_PS as u64, a % FS_PER_PS as u64)
    }

    /// Inverse of [`Time::ps_string`]; also accepts plain integers.
    pub fn parse_ps(s: &str) -> Option<Self> {
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() || frac.len() > 3 || !int.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: i64 = int.parse().ok()?;
        let mut frac_fs: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        for _ in frac.len()..3 {
            frac_fs *= 10;
        }
        let fs = whole.checked_mul(FS_PER_PS)?.checked_add(frac_fs)?;
        Some(Time(if neg { -fs } else { fs }))
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.ps_string())
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 += rhs.0;
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl SubAssign for Time {
    fn sub_assign(&mut self, rhs: Time) {
        self.0 -= rhs.0;
    }
}

impl Neg for Time {
    type Output = Time;
    fn neg(self) -> Time {
        Time(-self.0)
    }
}

impl Mul<i64> for Time {
    type Output = Time;
    fn mul(self, rhs: i64) -> Time {
        Time(self.0 * rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ps_text_round_trips() {
        for fs in [0, 1, -1, 999, 1_000, 833_333, -78_000, 1_666_667] {
            let t = Time(fs);
            assert_eq!(Time::parse_ps(&t.ps_string()), Some(t));
        }
        assert_eq!(Time(833_333).ps_string(), "833.333");
        assert_eq!(Time(-1).ps_string(), "-0.001");
        assert_eq!(Time::parse_ps("2500"), Some(Time::from_ps_int(2500)));
        assert_eq!(Time::parse_ps("1.5"), Some(Time(1_500)));
        assert_eq!(Time::parse_ps("1.2345"), None);
        assert_eq!(Time::parse_ps("x"), None);
    }

    #[test]
    fn rounding() {
        assert_eq!(Time::from_ps(4.91), Time(4_910));
        assert_eq!(Time::from_ps(1e12 / 600e6), Time(1_666_667));
    }
}
