//! Quasi-identifier types: gender, birth date, ZIP code and the demographic
//! key built from them.
//!
//! Birth dates and ZIP codes carry a generalization level. Levels are
//! ordered from finest to coarsest, so `a < b` reads "a is more specific
//! than b".

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earliest accepted birth year.
pub const MIN_BIRTH_YEAR: i32 = 1878;

pub fn current_year() -> i32 {
    chrono::Utc::now().year()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
    Unreported,
}

impl Gender {
    /// Accepts `f`, `female`, `m`, `male`, `u`, `unreported` in any case.
    pub fn parse(token: &str) -> Result<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            "u" | "unreported" => Ok(Gender::Unreported),
            _ => Err(Error::InvalidGender(token.to_string())),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
            Gender::Unreported => "U",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gender::parse(s)
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthLevel {
    Full,
    YearMonth,
    YearOnly,
    Absent,
}

impl BirthLevel {
    pub const ALL: [BirthLevel; 4] = [
        BirthLevel::Full,
        BirthLevel::YearMonth,
        BirthLevel::YearOnly,
        BirthLevel::Absent,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BirthLevel::Full => "full",
            BirthLevel::YearMonth => "year_month",
            BirthLevel::YearOnly => "year",
            BirthLevel::Absent => "absent",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(BirthLevel::Full),
            "year_month" | "yearmonth" => Ok(BirthLevel::YearMonth),
            "year" | "year_only" | "yearonly" => Ok(BirthLevel::YearOnly),
            "absent" => Ok(BirthLevel::Absent),
            other => Err(Error::InvalidConfig(format!(
                "unknown birth level {other:?}"
            ))),
        }
    }
}

impl fmt::Display for BirthLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZipLevel {
    Zip5,
    Zip3,
    Zip2,
    Absent,
}

impl ZipLevel {
    pub const ALL: [ZipLevel; 4] = [
        ZipLevel::Zip5,
        ZipLevel::Zip3,
        ZipLevel::Zip2,
        ZipLevel::Absent,
    ];

    pub fn digits(self) -> usize {
        match self {
            ZipLevel::Zip5 => 5,
            ZipLevel::Zip3 => 3,
            ZipLevel::Zip2 => 2,
            ZipLevel::Absent => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ZipLevel::Zip5 => "zip5",
            ZipLevel::Zip3 => "zip3",
            ZipLevel::Zip2 => "zip2",
            ZipLevel::Absent => "absent",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "zip5" => Ok(ZipLevel::Zip5),
            "zip3" => Ok(ZipLevel::Zip3),
            "zip2" => Ok(ZipLevel::Zip2),
            "absent" => Ok(ZipLevel::Absent),
            other => Err(Error::InvalidConfig(format!("unknown zip level {other:?}"))),
        }
    }
}

impl fmt::Display for ZipLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Generalization level of a whole key; displayed as `birth/zip`, e.g. `full/zip5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyLevel {
    pub birth: BirthLevel,
    pub zip: ZipLevel,
}

impl KeyLevel {
    pub const FULL: KeyLevel = KeyLevel {
        birth: BirthLevel::Full,
        zip: ZipLevel::Zip5,
    };

    pub fn new(birth: BirthLevel, zip: ZipLevel) -> Self {
        KeyLevel { birth, zip }
    }

    /// True when both components are at least as specific as `other`'s.
    pub fn is_finer_or_equal(self, other: KeyLevel) -> bool {
        self.birth <= other.birth && self.zip <= other.zip
    }

    pub fn label(self) -> String {
        format!("{}/{}", self.birth.label(), self.zip.label())
    }
}

impl fmt::Display for KeyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.birth.label(), self.zip.label())
    }
}

/// A possibly truncated date of birth.
///
/// `day` implies `month`, which implies `year`; a full date is always a
/// real calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BirthDate {
    year: Option<i32>,
    month: Option<u32>,
    day: Option<u32>,
}

impl BirthDate {
    pub const ABSENT: BirthDate = BirthDate {
        year: None,
        month: None,
        day: None,
    };

    pub fn full(year: i32, month: u32, day: u32) -> Result<Self> {
        check_year(year, &format!("{year:04}-{month:02}-{day:02}"))?;
        if NaiveDate::from_ymd_opt(year, month, day).is_none() {
            return Err(Error::InvalidBirthDate {
                value: format!("{year:04}-{month:02}-{day:02}"),
                reason: "invalid calendar date".into(),
            });
        }
        Ok(BirthDate {
            year: Some(year),
            month: Some(month),
            day: Some(day),
        })
    }

    pub fn year_month(year: i32, month: u32) -> Result<Self> {
        check_year(year, &format!("{year:04}-{month:02}"))?;
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidBirthDate {
                value: format!("{year:04}-{month:02}"),
                reason: "month out of range".into(),
            });
        }
        Ok(BirthDate {
            year: Some(year),
            month: Some(month),
            day: None,
        })
    }

    pub fn year_only(year: i32) -> Result<Self> {
        check_year(year, &year.to_string())?;
        Ok(BirthDate {
            year: Some(year),
            month: None,
            day: None,
        })
    }

    pub fn from_naive(date: NaiveDate) -> Result<Self> {
        BirthDate::full(date.year(), date.month(), date.day())
    }

    /// Parses `""`, `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(BirthDate::ABSENT);
        }
        let bad = |reason: &str| Error::InvalidBirthDate {
            value: text.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = text.split('-').collect();
        let widths_ok = match parts.as_slice() {
            [y] => y.len() == 4,
            [y, m] => y.len() == 4 && m.len() == 2,
            [y, m, d] => y.len() == 4 && m.len() == 2 && d.len() == 2,
            _ => false,
        };
        if !widths_ok || !parts.iter().all(|p| p.bytes().all(|b| b.is_ascii_digit())) {
            return Err(bad("expected YYYY, YYYY-MM or YYYY-MM-DD"));
        }
        let year: i32 = parts[0].parse().map_err(|_| bad("bad year"))?;
        match parts.len() {
            1 => BirthDate::year_only(year),
            2 => BirthDate::year_month(year, parts[1].parse().map_err(|_| bad("bad month"))?),
            _ => {
                let month: u32 = parts[1].parse().map_err(|_| bad("bad month"))?;
                let day: u32 = parts[2].parse().map_err(|_| bad("bad day"))?;
                BirthDate::full(year, month, day)
            }
        }
    }

    pub fn year(&self) -> Option<i32> {
        self.year
    }

    pub fn month(&self) -> Option<u32> {
        self.month
    }

    pub fn day(&self) -> Option<u32> {
        self.day
    }

    pub fn level(&self) -> BirthLevel {
        match (self.year, self.month, self.day) {
            (Some(_), Some(_), Some(_)) => BirthLevel::Full,
            (Some(_), Some(_), None) => BirthLevel::YearMonth,
            (Some(_), None, _) => BirthLevel::YearOnly,
            (None, _, _) => BirthLevel::Absent,
        }
    }

    /// Drops components finer than `level`. Fails if `level` is finer than
    /// the current level.
    pub fn generalize(&self, level: BirthLevel) -> Result<Self> {
        let current = self.level();
        if level < current {
            return Err(Error::RefinementRequested {
                field: "birth",
                current: current.label(),
                requested: level.label(),
            });
        }
        Ok(self.truncate(level))
    }

    /// Like [`generalize`](Self::generalize) but leaves already-coarser dates alone.
    pub fn coarsen_at_least(&self, level: BirthLevel) -> Self {
        self.truncate(level.max(self.level()))
    }

    fn truncate(&self, level: BirthLevel) -> Self {
        match level {
            BirthLevel::Full => *self,
            BirthLevel::YearMonth => BirthDate { day: None, ..*self },
            BirthLevel::YearOnly => BirthDate {
                year: self.year,
                month: None,
                day: None,
            },
            BirthLevel::Absent => BirthDate::ABSENT,
        }
    }
}

fn check_year(year: i32, value: &str) -> Result<()> {
    let max = current_year();
    if (MIN_BIRTH_YEAR..=max).contains(&year) {
        Ok(())
    } else {
        Err(Error::InvalidBirthDate {
            value: value.to_string(),
            reason: format!("year outside {MIN_BIRTH_YEAR}..={max}"),
        })
    }
}

impl fmt::Display for BirthDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.year, self.month, self.day) {
            (Some(y), Some(m), Some(d)) => write!(f, "{y:04}-{m:02}-{d:02}"),
            (Some(y), Some(m), None) => write!(f, "{y:04}-{m:02}"),
            (Some(y), None, _) => write!(f, "{y:04}"),
            (None, _, _) => Ok(()),
        }
    }
}

impl FromStr for BirthDate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BirthDate::parse(s)
    }
}

/// A 5-digit ZIP code or a prefix of one (3 or 2 digits), or absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZipCode {
    digits: String,
}

impl ZipCode {
    pub const ABSENT: ZipCode = ZipCode {
        digits: String::new(),
    };

    /// Parses an empty string or 2, 3 or 5 ASCII digits.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let ok = matches!(text.len(), 0 | 2 | 3 | 5) && text.bytes().all(|b| b.is_ascii_digit());
        if ok {
            Ok(ZipCode {
                digits: text.to_string(),
            })
        } else {
            Err(Error::InvalidZip(text.to_string()))
        }
    }

    pub fn zip5(text: &str) -> Result<Self> {
        let zip = ZipCode::parse(text)?;
        if zip.level() == ZipLevel::Zip5 {
            Ok(zip)
        } else {
            Err(Error::InvalidZip(text.trim().to_string()))
        }
    }

    pub fn digits(&self) -> &str {
        &self.digits
    }

    pub fn level(&self) -> ZipLevel {
        match self.digits.len() {
            5 => ZipLevel::Zip5,
            3 => ZipLevel::Zip3,
            2 => ZipLevel::Zip2,
            _ => ZipLevel::Absent,
        }
    }

    pub fn generalize(&self, level: ZipLevel) -> Result<Self> {
        let current = self.level();
        if level < current {
            return Err(Error::RefinementRequested {
                field: "zip",
                current: current.label(),
                requested: level.label(),
            });
        }
        Ok(self.truncate(level))
    }

    pub fn coarsen_at_least(&self, level: ZipLevel) -> Self {
        self.truncate(level.max(self.level()))
    }

    fn truncate(&self, level: ZipLevel) -> Self {
        ZipCode {
            digits: self.digits[..level.digits()].to_string(),
        }
    }
}

impl fmt::Display for ZipCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digits)
    }
}

/// The (birth date, gender, ZIP) triple used as a join key.
///
/// Keys at different generalization levels are never equal under
/// `PartialEq`; [`DemographicKey::same_as`] turns that situation into an
/// error instead.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DemographicKey {
    pub birth: BirthDate,
    pub gender: Gender,
    pub zip: ZipCode,
}

impl DemographicKey {
    pub fn new(birth: BirthDate, gender: Gender, zip: ZipCode) -> Self {
        DemographicKey { birth, gender, zip }
    }

    pub fn level(&self) -> KeyLevel {
        KeyLevel {
            birth: self.birth.level(),
            zip: self.zip.level(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.level() == KeyLevel::FULL
    }

    /// Equality that refuses to compare keys at different levels.
    pub fn same_as(&self, other: &DemographicKey) -> Result<bool> {
        let (mine, theirs) = (self.level(), other.level());
        if mine != theirs {
            return Err(Error::MixedGeneralization {
                expected: mine,
                found: theirs,
            });
        }
        Ok(self == other)
    }

    pub fn generalize(&self, birth: BirthLevel, zip: ZipLevel) -> Result<Self> {
        Ok(DemographicKey {
            birth: self.birth.generalize(birth)?,
            gender: self.gender,
            zip: self.zip.generalize(zip)?,
        })
    }

    pub fn generalize_to(&self, level: KeyLevel) -> Result<Self> {
        self.generalize(level.birth, level.zip)
    }

    /// Coarsens each field to at least the given level, keeping fields
    /// that are already coarser.
    pub fn coarsen_at_least(&self, birth: BirthLevel, zip: ZipLevel) -> Self {
        DemographicKey {
            birth: self.birth.coarsen_at_least(birth),
            gender: self.gender,
            zip: self.zip.coarsen_at_least(zip),
        }
    }
}

impl fmt::Display for DemographicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.birth, self.gender, self.zip)
    }
}
