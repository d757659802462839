//! How identifying is a demographic combination?
//!
//! The model: a bin holds `N` people sharing ZIP, gender and age window,
//! and their birth dates fall independently and uniformly over `D`
//! distinguishable values. A given member is unique when none of the other
//! `N - 1` share their value:
//!
//! ```text
//! p_unique(N, D) = (1 - 1/D)^(N - 1)
//! ```
//!
//! `D` depends on how much of the birth date is disclosed: about 365.25
//! values per year of window for a full date, 12 per year for year and
//! month, one per year for the year alone, and a single value when the
//! date is withheld.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::to_canonical_string;
use crate::demographics::{
    BirthDate, BirthLevel, DemographicKey, Gender, KeyLevel, ZipCode, ZipLevel,
};
use crate::error::{Error, Result};
use crate::ingestion::PopulationTable;

/// Window used when the population table gives no band width.
pub const DEFAULT_WINDOW_YEARS: u32 = 90;

/// Distinguishable birth-date values over a window of `window_years`.
/// Full dates use 365.25 days per year rounded half-up.
pub fn date_space(level: BirthLevel, window_years: u32) -> u64 {
    let a = u64::from(window_years);
    match level {
        BirthLevel::Full => (1461 * a + 2) / 4,
        BirthLevel::YearMonth => 12 * a,
        BirthLevel::YearOnly => a,
        BirthLevel::Absent => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniquenessModel {
    pub date_space: u64,
    pub bin_population: u64,
}

impl UniquenessModel {
    pub fn new(level: BirthLevel, window_years: u32, bin_population: u64) -> Self {
        UniquenessModel {
            date_space: date_space(level, window_years).max(1),
            bin_population,
        }
    }

    pub fn p_unique(&self) -> Result<f64> {
        p_unique(self.bin_population, self.date_space)
    }
}

/// Probability that one member of a bin of `persons` has a birth-date value
/// shared by nobody else, with `date_values` equally likely values.
pub fn p_unique(persons: u64, date_values: u64) -> Result<f64> {
    if persons == 0 || date_values == 0 {
        return Err(Error::Domain {
            persons,
            date_values,
        });
    }
    if persons == 1 {
        return Ok(1.0);
    }
    if date_values == 1 {
        return Ok(0.0);
    }
    let others = (persons - 1) as f64;
    Ok((others * (-1.0 / date_values as f64).ln_1p()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalUniqueness {
    pub fraction_unique: f64,
    /// Bin size -> number of records in bins of that size.
    pub histogram: BTreeMap<usize, usize>,
}

/// Share of records whose key occurs exactly once. All keys must be at
/// one generalization level.
pub fn empirical_uniqueness(keys: &[DemographicKey]) -> Result<EmpiricalUniqueness> {
    if let Some(first) = keys.first() {
        let level = first.level();
        if let Some(other) = keys.iter().find(|k| k.level() != level) {
            return Err(Error::MixedGeneralization {
                expected: level,
                found: other.level(),
            });
        }
    }
    let mut bins: std::collections::HashMap<&DemographicKey, usize> =
        std::collections::HashMap::new();
    for k in keys {
        *bins.entry(k).or_default() += 1;
    }
    let mut histogram = BTreeMap::new();
    for size in bins.values() {
        *histogram.entry(*size).or_default() += size;
    }
    let unique = histogram.get(&1).copied().unwrap_or(0);
    let fraction_unique = if keys.is_empty() {
        0.0
    } else {
        unique as f64 / keys.len() as f64
    };
    Ok(EmpiricalUniqueness {
        fraction_unique,
        histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinFlag {
    #[serde(rename = "known")]
    Known,
    #[serde(rename = "unknown-bin")]
    UnknownBin,
}

impl BinFlag {
    pub fn label(self) -> &'static str {
        match self {
            BinFlag::Known => "known",
            BinFlag::UnknownBin => "unknown-bin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCell {
    pub level: KeyLevel,
    /// People sharing zip (at this level), gender and age window.
    pub population: u64,
    pub date_values: u64,
    /// Expected size of the bin containing the person: `1 + (N - 1) / D`.
    pub expected_bin: f64,
    pub p_unique: f64,
    pub flag: BinFlag,
}

impl RiskCell {
    fn to_json(self) -> Value {
        json!({
            "population": self.population,
            "date_values": self.date_values,
            "expected_bin": self.expected_bin,
            "p_unique": self.p_unique,
            "flag": self.flag.label(),
        })
    }
}

/// Who is asking: a 5-digit ZIP, gender and a birth date with at least a
/// year, evaluated as of `as_of_year`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskQuery {
    pub zip: ZipCode,
    pub gender: Gender,
    pub birth: BirthDate,
    pub window_years: Option<u32>,
    pub as_of_year: i32,
}

impl RiskQuery {
    pub fn new(zip: ZipCode, gender: Gender, birth: BirthDate) -> Self {
        RiskQuery {
            zip,
            gender,
            birth,
            window_years: None,
            as_of_year: crate::demographics::current_year(),
        }
    }

    pub fn key_level(&self) -> KeyLevel {
        KeyLevel::new(self.birth.level(), self.zip.level())
    }

    fn age(&self) -> Result<u32> {
        let year = self.birth.year().ok_or_else(|| Error::InvalidBirthDate {
            value: String::new(),
            reason: "a birth year is required".into(),
        })?;
        u32::try_from(self.as_of_year - year).map_err(|_| Error::InvalidBirthDate {
            value: self.birth.to_string(),
            reason: format!("birth year after reference year {}", self.as_of_year),
        })
    }
}

/// p_unique for every (birth level, zip level) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub selected: KeyLevel,
    pub window_years: u32,
    pub as_of_year: i32,
    pub cells: BTreeMap<KeyLevel, RiskCell>,
}

impl RiskReport {
    pub fn cell(&self, level: KeyLevel) -> &RiskCell {
        &self.cells[&level]
    }

    pub fn selected_cell(&self) -> &RiskCell {
        self.cell(self.selected)
    }

    /// The report as it would read after generalizing to `target`: every
    /// cell finer than `target` in some component takes the value of the
    /// cell coarsened to `target`.
    pub fn floored_at(&self, target: KeyLevel) -> RiskReport {
        let cells = self
            .cells
            .keys()
            .map(|lvl| {
                let floor = KeyLevel::new(lvl.birth.max(target.birth), lvl.zip.max(target.zip));
                let mut cell = self.cells[&floor];
                cell.level = *lvl;
                (*lvl, cell)
            })
            .collect();
        RiskReport {
            selected: KeyLevel::new(
                self.selected.birth.max(target.birth),
                self.selected.zip.max(target.zip),
            ),
            window_years: self.window_years,
            as_of_year: self.as_of_year,
            cells,
        }
    }

    /// JSON grid with cells keyed `birth_level/zip_level`.
    pub fn to_json(&self) -> Value {
        let cells: serde_json::Map<String, Value> = self
            .cells
            .iter()
            .map(|(lvl, c)| (lvl.label(), c.to_json()))
            .collect();
        json!({
            "selected": self.selected.label(),
            "window_years": self.window_years,
            "as_of_year": self.as_of_year,
            "cells": cells,
        })
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_json())
    }
}

/// Builds the risk grid for one person.
///
/// Population counts come from the table: the person's 5-digit bin for
/// `zip5`, prefix sums for `zip3`/`zip2`, the whole table for `absent`,
/// always restricted to the person's gender and (unless the birth date is
/// withheld) to bands containing their age. When the person's own bin is
/// missing every cell is flagged `unknown-bin` and reports p_unique = 1.
pub fn risk_report(query: &RiskQuery, table: &PopulationTable) -> Result<RiskReport> {
    if query.zip.level() != ZipLevel::Zip5 {
        return Err(Error::InvalidZip(query.zip.to_string()));
    }
    if query.window_years == Some(0) {
        return Err(Error::InvalidConfig(
            "window must be at least one year".into(),
        ));
    }
    let age = query.age()?;
    let own_bin = table
        .bin_for(&query.zip, query.gender, age)
        .filter(|b| b.count > 0);
    let window = query
        .window_years
        .or(own_bin.map(|b| b.band_width()))
        .unwrap_or(DEFAULT_WINDOW_YEARS);

    let mut cells = BTreeMap::new();
    for birth in BirthLevel::ALL {
        for zip in ZipLevel::ALL {
            let level = KeyLevel::new(birth, zip);
            let date_values = date_space(birth, window);
            let cell = if own_bin.is_some() {
                let prefix = &query.zip.digits()[..zip.digits()];
                let age_filter = (birth != BirthLevel::Absent).then_some(age);
                let population = table.count_matching(prefix, query.gender, age_filter);
                RiskCell {
                    level,
                    population,
                    date_values,
                    expected_bin: 1.0 + (population - 1) as f64 / date_values as f64,
                    p_unique: p_unique(population, date_values)?,
                    flag: BinFlag::Known,
                }
            } else {
                RiskCell {
                    level,
                    population: 0,
                    date_values,
                    expected_bin: 1.0,
                    p_unique: 1.0,
                    flag: BinFlag::UnknownBin,
                }
            };
            cells.insert(level, cell);
        }
    }
    Ok(RiskReport {
        selected: query.key_level(),
        window_years: window,
        as_of_year: query.as_of_year,
        cells,
    })
}
