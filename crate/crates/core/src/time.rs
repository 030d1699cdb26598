use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Simulation time or duration in integer microseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Micros(pub i64);

impl Micros {
    pub const ZERO: Micros = Micros(0);
    pub const MAX: Micros = Micros(i64::MAX);

    pub const fn from_us(us: i64) -> Self {
        Micros(us)
    }

    pub const fn from_ms(ms: i64) -> Self {
        Micros(ms * 1_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        Micros(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_ms_f64(ms: f64) -> Self {
        Micros((ms * 1_000.0).round() as i64)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Micros((s * 1_000_000.0).round() as i64)
    }

    pub const fn as_us(self) -> i64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    /// Whole milliseconds, rounding toward negative infinity.
    pub fn floor_ms(self) -> i64 {
        self.0.div_euclid(1_000)
    }

    /// Whole milliseconds, rounding toward positive infinity.
    pub fn ceil_ms(self) -> i64 {
        -(-self.0).div_euclid(1_000)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Parses a decimal millisecond value with at most three fractional
    /// digits without going through floating point.
    pub fn parse_ms(s: &str) -> Option<Self> {
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
        let mut frac_us: i64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            frac_us += i64::from(b - b'0') * 10i64.pow(2 - i as u32);
        }
        let us = whole.checked_mul(1_000)?.checked_add(frac_us)?;
        Some(Micros(if neg { -us } else { us }))
    }
}

/// Formats as milliseconds with exactly three decimals, e.g. `-200.000`.
impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:03}", abs / 1_000, abs % 1_000)
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl SubAssign for Micros {
    fn sub_assign(&mut self, rhs: Micros) {
        self.0 -= rhs.0;
    }
}

impl Neg for Micros {
    type Output = Micros;
    fn neg(self) -> Micros {
        Micros(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ms_text_round_trips() {
        for us in [0, 1, 999, 1_000, 1_500_250, -200_000, -1, -999] {
            let t = Micros(us);
            assert_eq!(Micros::parse_ms(&t.to_string()), Some(t), "{t}");
        }
        assert_eq!(Micros::parse_ms("12"), Some(Micros::from_ms(12)));
        assert_eq!(Micros::parse_ms("1.5"), Some(Micros(1_500)));
        assert_eq!(Micros::parse_ms("1.2345"), None);
        assert_eq!(Micros::parse_ms("x"), None);
    }

    #[test]
    fn ms_rounding() {
        assert_eq!(Micros(1_001).floor_ms(), 1);
        assert_eq!(Micros(1_001).ceil_ms(), 2);
        assert_eq!(Micros(-1_001).floor_ms(), -2);
        assert_eq!(Micros(-1_001).ceil_ms(), -1);
        assert_eq!(Micros(2_000).ceil_ms(), 2);
    }
}
