//! Year-month dates as they appear on resumes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable date {0:?} (expected YYYY-MM)")]
pub struct DateParseError(pub String);

/// A calendar month. Day components are dropped on parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, used for all duration arithmetic.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        let year = ordinal.div_euclid(12) as i32;
        let month = (ordinal.rem_euclid(12) + 1) as u8;
        Self { year, month }
    }

    /// Signed distance `self - earlier` in fractional years (1 month = 1/12 year).
    pub fn years_since(self, earlier: YearMonth) -> f64 {
        (self.ordinal() - earlier.ordinal()) as f64 / 12.0
    }

    pub fn plus_months(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Adds a fractional number of years, rounding to the nearest month.
    pub fn plus_years(self, years: f64) -> Self {
        self.plus_months((years * 12.0).round() as i64)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = DateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DateParseError(s.to_string());
        let t = s.trim();
        let mut parts = t.split('-');
        let year_part = parts.next().ok_or_else(err)?;
        let month_part = parts.next().ok_or_else(err)?;
        // an optional day component is accepted and ignored
        if let Some(day) = parts.next() {
            if day.len() != 2 || !day.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
        }
        if parts.next().is_some()
            || year_part.len() != 4
            || month_part.len() != 2
            || !year_part.bytes().all(|b| b.is_ascii_digit())
            || !month_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let year: i32 = year_part.parse().map_err(|_| err())?;
        let month: u8 = month_part.parse().map_err(|_| err())?;
        YearMonth::new(year, month).ok_or_else(err)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        let d: YearMonth = "2010-06".parse().unwrap();
        assert_eq!((d.year(), d.month()), (2010, 6));
        assert_eq!(d.to_string(), "2010-06");
        let with_day: YearMonth = "2010-06-15".parse().unwrap();
        assert_eq!(with_day, d);
    }

    #[test]
    fn rejects_garbage() {
        for bad in [
            "", "2010", "2010-13", "2010-00", "10-06", "2010/06", "2010-6", "abcd-ef",
        ] {
            assert!(bad.parse::<YearMonth>().is_err(), "{bad}");
        }
    }

    #[test]
    fn year_arithmetic() {
        let a: YearMonth = "2010-06".parse().unwrap();
        let b: YearMonth = "2012-06".parse().unwrap();
        assert_eq!(b.years_since(a), 2.0);
        assert_eq!(a.years_since(b), -2.0);
        assert_eq!(a.plus_years(5.0).to_string(), "2015-06");
        assert_eq!(YearMonth::from_ordinal(a.ordinal()), a);
        assert_eq!(a.plus_months(7).to_string(), "2011-01");
    }
}
