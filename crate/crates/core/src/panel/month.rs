use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PanelError;

/// A monthly period stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self, PanelError> {
        if !(1..=12).contains(&month) {
            return Err(PanelError::MalformedDate(format!("{year}-{month}")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Month index counted from year 0, used for arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: Month) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn days_in_month(self) -> u32 {
        let next = self.succ().first_day();
        (next - self.first_day()).num_days() as u32
    }

    /// Calendar date of day `day` in this month, clamped to the month's end.
    pub fn day(self, day: u32) -> NaiveDate {
        let d = day.clamp(1, self.days_in_month());
        NaiveDate::from_ymd_opt(self.year, self.month, d).expect("clamped day")
    }

    pub fn of_date(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = PanelError;

    /// Accepts `YYYY/MM` and `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || PanelError::MalformedDate(s.to_string());
        let (y, m) = s.split_once(['/', '-']).ok_or_else(bad)?;
        if y.len() != 4 || m.is_empty() || m.len() > 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a calendar date written `YYYY-MM-DD` or `YYYY/MM/DD`.
pub fn parse_date(s: &str) -> Result<NaiveDate, PanelError> {
    let t = s.trim();
    NaiveDate::parse_from_str(t, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(t, "%Y/%m/%d"))
        .map_err(|_| PanelError::MalformedDate(t.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_separators() {
        assert_eq!("2020/07".parse::<Month>().unwrap(), Month::new(2020, 7).unwrap());
        assert_eq!("2020-7".parse::<Month>().unwrap(), Month::new(2020, 7).unwrap());
        assert!("2020-13".parse::<Month>().is_err());
        assert!("20-01".parse::<Month>().is_err());
        assert!("2020".parse::<Month>().is_err());
    }

    #[test]
    fn arithmetic_wraps_years() {
        let m = Month::new(2019, 12).unwrap();
        assert_eq!(m.succ(), Month::new(2020, 1).unwrap());
        assert_eq!(m.offset(-12), Month::new(2018, 12).unwrap());
        assert_eq!(Month::new(2004, 1).unwrap().months_until(Month::new(2020, 7).unwrap()), 198);
    }

    #[test]
    fn day_clamps_to_month_end() {
        let feb = Month::new(2020, 2).unwrap();
        assert_eq!(feb.days_in_month(), 29);
        assert_eq!(feb.day(31), NaiveDate::from_ymd_opt(2020, 2, 29).unwrap());
    }
}
