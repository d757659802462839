//! Validating CSV readers (and canonical writers) for profile datasets,
//! registry snapshots, population tables and diagnostics.
//!
//! Readers never abort on a bad data row. Each rejected row becomes a
//! [`Diagnostic`] carrying its 1-based line number, so that
//! `records.len() + diagnostics.len()` equals the number of data rows.
//! Only a wrong header aborts a read.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;

use crate::demographics::{BirthDate, BirthLevel, DemographicKey, Gender, ZipCode, ZipLevel};
use crate::error::{Error, Result};
use crate::names::{normalize_name, PersonName};

pub const PROFILE_HEADER: [&str; 4] = ["id", "dob", "gender", "zip"];
pub const REGISTRY_HEADER: [&str; 5] = ["given", "surname", "dob", "gender", "zip"];
pub const POPULATION_HEADER: [&str; 5] = ["zip", "gender", "age_lo", "age_hi", "count"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: u64,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: u64, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn warning(line: u64, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.severity, self.message)
    }
}

/// Accepted records in input order plus rejected-row diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

/// A de-identified record: demographics plus an uninterpreted payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub id: String,
    pub key: DemographicKey,
    pub payload: String,
}

/// A named population record, always at full date / 5-digit ZIP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegistryRecord {
    pub name: PersonName,
    pub key: DemographicKey,
}

impl RegistryRecord {
    pub fn new(name: PersonName, key: DemographicKey) -> Result<Self> {
        if key.birth.level() != BirthLevel::Full {
            return Err(Error::InvalidBirthDate {
                value: key.birth.to_string(),
                reason: "registry requires full dob".into(),
            });
        }
        if key.zip.level() != ZipLevel::Zip5 {
            return Err(Error::InvalidZip(key.zip.to_string()));
        }
        Ok(RegistryRecord { name, key })
    }
}

fn strip_bom(bytes: &[u8]) -> &[u8] {
    bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes)
}

fn open_csv<R: Read>(
    mut source: R,
    expected: &[&str],
    allow_extra: bool,
) -> Result<(csv::Reader<std::io::Cursor<Vec<u8>>>, usize)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let body = strip_bom(&bytes).to_vec();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::Cursor::new(body));
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    let prefix_ok = found.len() >= expected.len() && found[..expected.len()] == *expected;
    if !prefix_ok || (!allow_extra && found.len() != expected.len()) {
        return Err(Error::MalformedHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok((rdr, found.len()))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_gender_cell(cell: &str) -> Result<Gender> {
    if cell.trim().is_empty() {
        Ok(Gender::Unreported)
    } else {
        Gender::parse(cell)
    }
}

/// Reads `id,dob,gender,zip[,payload...]`. Extra columns are joined with a
/// single space into the payload; an empty gender cell reads as unreported.
pub fn read_profiles<R: Read>(source: R) -> Result<Parsed<Profile>> {
    let (mut rdr, _) = open_csv(source, &PROFILE_HEADER, true)?;
    let mut seen = HashSet::new();
    let mut out = Parsed {
        records: Vec::new(),
        diagnostics: Vec::new(),
    };
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(Diagnostic::error(line, e.to_string()));
                continue;
            }
        };
        let line = line_of(&row);
        match profile_from_row(&row) {
            Ok(profile) => {
                if seen.insert(profile.id.clone()) {
                    out.records.push(profile);
                } else {
                    out.diagnostics.push(Diagnostic::error(
                        line,
                        format!("duplicate profile id {:?}", profile.id),
                    ));
                }
            }
            Err(e) => out.diagnostics.push(Diagnostic::error(line, e.to_string())),
        }
    }
    Ok(out)
}

fn profile_from_row(row: &csv::StringRecord) -> Result<Profile> {
    if row.len() < PROFILE_HEADER.len() {
        return Err(Error::InvalidRow {
            line: line_of(row),
            message: format!("expected at least 4 columns, found {}", row.len()),
        });
    }
    let id = row[0].trim();
    if id.is_empty() {
        return Err(Error::InvalidRow {
            line: line_of(row),
            message: "empty profile id".into(),
        });
    }
    let key = DemographicKey::new(
        BirthDate::parse(&row[1])?,
        parse_gender_cell(&row[2])?,
        ZipCode::parse(&row[3])?,
    );
    let payload = row
        .iter()
        .skip(PROFILE_HEADER.len())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Profile {
        id: id.to_string(),
        key,
        payload,
    })
}

/// Reads `given,surname,dob,gender,zip`; every accepted row has a full
/// date of birth and a 5-digit ZIP.
pub fn read_registry<R: Read>(source: R) -> Result<Parsed<RegistryRecord>> {
    let (mut rdr, _) = open_csv(source, &REGISTRY_HEADER, false)?;
    let mut out = Parsed {
        records: Vec::new(),
        diagnostics: Vec::new(),
    };
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(Diagnostic::error(line, e.to_string()));
                continue;
            }
        };
        let line = line_of(&row);
        match registry_from_row(&row) {
            Ok(rec) => out.records.push(rec),
            Err(msg) => out.diagnostics.push(Diagnostic::error(line, msg)),
        }
    }
    Ok(out)
}

fn registry_from_row(row: &csv::StringRecord) -> std::result::Result<RegistryRecord, String> {
    if row.len() != REGISTRY_HEADER.len() {
        return Err(format!("expected 5 columns, found {}", row.len()));
    }
    let name = normalize_name(&format!("{} {}", &row[0], &row[1])).map_err(|e| e.to_string())?;
    let birth = BirthDate::parse(&row[2]).map_err(|e| e.to_string())?;
    if birth.level() != BirthLevel::Full {
        return Err("registry requires full dob".into());
    }
    let gender = parse_gender_cell(&row[3]).map_err(|e| e.to_string())?;
    let zip = ZipCode::parse(&row[4]).map_err(|e| e.to_string())?;
    if zip.level() != ZipLevel::Zip5 {
        return Err("registry requires 5-digit zip".into());
    }
    RegistryRecord::new(name, DemographicKey::new(birth, gender, zip)).map_err(|e| e.to_string())
}

/// Census-style count of people sharing (ZIP, gender, age band).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationBin {
    pub zip: ZipCode,
    pub gender: Gender,
    pub age_lo: u32,
    pub age_hi: u32,
    pub count: u64,
}

impl PopulationBin {
    pub fn contains_age(&self, age: u32) -> bool {
        (self.age_lo..=self.age_hi).contains(&age)
    }

    pub fn band_width(&self) -> u32 {
        self.age_hi - self.age_lo + 1
    }
}

/// Result of a (zip, gender, age) lookup. `known` is false when the table
/// has no bin at all for the zip and gender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinLookup {
    pub count: u64,
    pub known: bool,
}

/// Disjoint population bins indexed by (zip, gender).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTable {
    bins: Vec<PopulationBin>,
    by_zip_gender: BTreeMap<(String, Gender), Vec<usize>>,
}

impl PopulationTable {
    /// Builds a table, rejecting overlapping age bands within one
    /// (zip, gender). `lines` labels the bins in errors; pass `None` to use
    /// 1-based positions.
    pub fn from_bins(bins: Vec<PopulationBin>, lines: Option<&[u64]>) -> Result<Self> {
        let label = |i: usize| lines.map_or(i as u64 + 1, |l| l[i]);
        let mut by_zip_gender: BTreeMap<(String, Gender), Vec<usize>> = BTreeMap::new();
        for (i, bin) in bins.iter().enumerate() {
            if bin.zip.level() != ZipLevel::Zip5 {
                return Err(Error::InvalidRow {
                    line: label(i),
                    message: "population bins require 5-digit zip".into(),
                });
            }
            if bin.age_lo > bin.age_hi {
                return Err(Error::InvalidRow {
                    line: label(i),
                    message: format!("age_lo {} exceeds age_hi {}", bin.age_lo, bin.age_hi),
                });
            }
            by_zip_gender
                .entry((bin.zip.digits().to_string(), bin.gender))
                .or_default()
                .push(i);
        }
        for idxs in by_zip_gender.values_mut() {
            idxs.sort_by_key(|&i| (bins[i].age_lo, i));
            for w in idxs.windows(2) {
                let (a, b) = (&bins[w[0]], &bins[w[1]]);
                if b.age_lo <= a.age_hi {
                    let (x, y) = (label(w[0]), label(w[1]));
                    return Err(Error::OverlappingBins {
                        first_line: x.min(y),
                        second_line: x.max(y),
                    });
                }
            }
        }
        Ok(PopulationTable {
            bins,
            by_zip_gender,
        })
    }

    pub fn bins(&self) -> &[PopulationBin] {
        &self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Whether any bin exists for this 5-digit zip and gender.
    pub fn knows(&self, zip: &ZipCode, gender: Gender) -> bool {
        self.by_zip_gender
            .contains_key(&(zip.digits().to_string(), gender))
    }

    /// Persons of `gender` in `zip` whose age band contains `age`.
    pub fn lookup(&self, zip: &ZipCode, gender: Gender, age: u32) -> BinLookup {
        match self.by_zip_gender.get(&(zip.digits().to_string(), gender)) {
            None => BinLookup {
                count: 0,
                known: false,
            },
            Some(idxs) => BinLookup {
                count: idxs
                    .iter()
                    .map(|&i| &self.bins[i])
                    .filter(|b| b.contains_age(age))
                    .map(|b| b.count)
                    .sum(),
                known: true,
            },
        }
    }

    /// The bin for (zip, gender) containing `age`, if any.
    pub fn bin_for(&self, zip: &ZipCode, gender: Gender, age: u32) -> Option<&PopulationBin> {
        self.by_zip_gender
            .get(&(zip.digits().to_string(), gender))?
            .iter()
            .map(|&i| &self.bins[i])
            .find(|b| b.contains_age(age))
    }

    /// Sums bins whose zip starts with `prefix` (empty prefix: every zip),
    /// restricted to `gender` and, when given, to bands containing `age`.
    pub fn count_matching(&self, prefix: &str, gender: Gender, age: Option<u32>) -> u64 {
        self.bins
            .iter()
            .filter(|b| b.gender == gender && b.zip.digits().starts_with(prefix))
            .filter(|b| age.is_none_or(|a| b.contains_age(a)))
            .map(|b| b.count)
            .sum()
    }

    /// Total population of a 5-digit zip over all genders and ages, or
    /// `None` when the zip does not appear in the table.
    pub fn zip_total(&self, zip: &ZipCode) -> Option<u64> {
        let mut found = false;
        let mut total = 0;
        for b in self.bins.iter().filter(|b| b.zip == *zip) {
            found = true;
            total += b.count;
        }
        found.then_some(total)
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Reads `zip,gender,age_lo,age_hi,count`. Unlike the record readers any
/// invalid row aborts, since a partial census table would understate bins.
pub fn read_population<R: Read>(source: R) -> Result<PopulationTable> {
    let (mut rdr, _) = open_csv(source, &POPULATION_HEADER, false)?;
    let mut bins = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        let bad = |message: String| Error::InvalidRow { line, message };
        if row.len() != POPULATION_HEADER.len() {
            return Err(bad(format!("expected 5 columns, found {}", row.len())));
        }
        let zip = ZipCode::zip5(&row[0]).map_err(|e| bad(e.to_string()))?;
        let gender = Gender::parse(&row[1]).map_err(|e| bad(e.to_string()))?;
        let num = |i: usize, what: &str| -> Result<u64> {
            row[i].trim().parse::<u64>().map_err(|_| {
                bad(format!(
                    "{what} must be a non-negative integer, found {:?}",
                    &row[i]
                ))
            })
        };
        let age_lo =
            u32::try_from(num(2, "age_lo")?).map_err(|_| bad("age_lo too large".into()))?;
        let age_hi =
            u32::try_from(num(3, "age_hi")?).map_err(|_| bad("age_hi too large".into()))?;
        let count = num(4, "count")?;
        bins.push(PopulationBin {
            zip,
            gender,
            age_lo,
            age_hi,
            count,
        });
        lines.push(line);
    }
    PopulationTable::from_bins(bins, Some(&lines))
}

fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

/// Canonical profile CSV: `id,dob,gender,zip,payload`.
pub fn write_profiles<W: Write>(sink: W, profiles: &[Profile]) -> Result<()> {
    let mut w = csv_writer(sink);
    w.write_record(["id", "dob", "gender", "zip", "payload"])?;
    for p in profiles {
        w.write_record([
            p.id.as_str(),
            &p.key.birth.to_string(),
            p.key.gender.code(),
            p.key.zip.digits(),
            &p.payload,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical registry CSV with normalized name tokens.
pub fn write_registry<W: Write>(sink: W, records: &[RegistryRecord]) -> Result<()> {
    let mut w = csv_writer(sink);
    w.write_record(REGISTRY_HEADER)?;
    for r in records {
        w.write_record([
            r.name.given(),
            r.name.surname(),
            &r.key.birth.to_string(),
            r.key.gender.code(),
            r.key.zip.digits(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_population<W: Write>(sink: W, table: &PopulationTable) -> Result<()> {
    let mut w = csv_writer(sink);
    w.write_record(POPULATION_HEADER)?;
    for b in table.bins() {
        w.write_record([
            b.zip.digits(),
            b.gender.code(),
            &b.age_lo.to_string(),
            &b.age_hi.to_string(),
            &b.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Diagnostics as `line,severity,message`.
pub fn write_diagnostics<W: Write>(sink: W, diagnostics: &[Diagnostic]) -> Result<()> {
    let mut w = csv_writer(sink);
    w.write_record(["line", "severity", "message"])?;
    for d in diagnostics {
        w.write_record([
            d.line.to_string(),
            d.severity.to_string(),
            d.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demographics::KeyLevel;
    use proptest::prelude::*;

    #[test]
    fn profile_examples() {
        let input =
            "id,dob,gender,zip\np1,1975-03-14,F,02139\np2,1975,F,02139\np3,1975-02-30,F,02139\n";
        let parsed = read_profiles(input.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.records[0].id, "p1");
        assert_eq!(parsed.records[0].key.level(), KeyLevel::FULL);
        assert_eq!(parsed.records[1].key.birth.level(), BirthLevel::YearOnly);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].line, 4);
        assert!(parsed.diagnostics[0]
            .message
            .contains("invalid calendar date"));
    }

    #[test]
    fn profile_payload_and_duplicates() {
        let input = "\u{feff}id,dob,gender,zip,conditions,meds\n\
                     hu1,1980-01-01,m,02139,asthma,albuterol\n\
                     hu1,1980-01-01,m,02139,,\n\
                     hu2,,,,,\n";
        let parsed = read_profiles(input.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.records[0].payload, "asthma albuterol");
        assert_eq!(
            parsed.records[1].key.level(),
            KeyLevel::new(BirthLevel::Absent, ZipLevel::Absent)
        );
        assert_eq!(parsed.records[1].key.gender, Gender::Unreported);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert!(parsed.diagnostics[0].message.contains("duplicate"));
    }

    #[test]
    fn malformed_header_aborts() {
        let err = read_profiles("id,dob,sex,zip\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
        assert!(matches!(
            read_registry("given,surname,dob,gender,zip,extra\n".as_bytes()),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn registry_examples() {
        let parsed = read_registry(
            "given,surname,dob,gender,zip\nElaine,Smith,1975-03-14,F,02139\nElaine,Smith,1975,F,02139\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].name.tokens(), ("elaine", "smith"));
        assert!(parsed.records[0].key.is_full());
        assert_eq!(parsed.diagnostics[0].message, "registry requires full dob");
        assert_eq!(parsed.diagnostics[0].line, 3);

        let empty = read_registry("given,surname,dob,gender,zip\n".as_bytes()).unwrap();
        assert!(empty.records.is_empty() && empty.diagnostics.is_empty());
    }

    #[test]
    fn registry_rejects_truncated_zip_and_short_rows() {
        let parsed = read_registry(
            "given,surname,dob,gender,zip\nA,B,1975-03-14,F,021\nA,B,1975-03-14\nA,,1975-03-14,F,02139\n".as_bytes(),
        )
        .unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.diagnostics.len(), 3);
        assert_eq!(
            parsed.diagnostics[0].message,
            "registry requires 5-digit zip"
        );
    }

    #[test]
    fn population_examples() {
        let t = read_population("zip,gender,age_lo,age_hi,count\n02139,F,20,29,4000\n".as_bytes())
            .unwrap();
        let z = ZipCode::zip5("02139").unwrap();
        assert_eq!(
            t.lookup(&z, Gender::Female, 25),
            BinLookup {
                count: 4000,
                known: true
            }
        );
        assert_eq!(
            t.lookup(&z, Gender::Female, 40),
            BinLookup {
                count: 0,
                known: true
            }
        );
        let unknown = ZipCode::zip5("99999").unwrap();
        assert_eq!(
            t.lookup(&unknown, Gender::Female, 25),
            BinLookup {
                count: 0,
                known: false
            }
        );

        let err = read_population(
            "zip,gender,age_lo,age_hi,count\n02139,F,20,29,1\n02139,M,20,29,1\n02139,F,25,34,1\n"
                .as_bytes(),
        )
        .unwrap_err();
        match err {
            Error::OverlappingBins {
                first_line,
                second_line,
            } => {
                assert_eq!((first_line, second_line), (2, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn population_aggregates() {
        let t = read_population(
            "zip,gender,age_lo,age_hi,count\n\
             02139,F,20,29,4000\n02139,F,30,39,3000\n02139,M,20,29,3500\n\
             02138,F,20,29,1000\n10001,F,20,29,700\n"
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(t.count_matching("021", Gender::Female, Some(25)), 5000);
        assert_eq!(t.count_matching("", Gender::Female, None), 8700);
        assert_eq!(t.zip_total(&ZipCode::zip5("02139").unwrap()), Some(10500));
        assert_eq!(t.zip_total(&ZipCode::zip5("02140").unwrap()), None);
        assert_eq!(t.total(), 12200);
    }

    #[test]
    fn population_rejects_bad_rows() {
        for body in [
            "021,F,1,2,3",
            "02139,X,1,2,3",
            "02139,F,5,2,3",
            "02139,F,1,2,-3",
        ] {
            let input = format!("zip,gender,age_lo,age_hi,count\n{body}\n");
            assert!(read_population(input.as_bytes()).is_err(), "{body}");
        }
    }

    #[test]
    fn diagnostics_csv() {
        let mut out = Vec::new();
        write_diagnostics(
            &mut out,
            &[Diagnostic::error(4, "invalid calendar date, really")],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "line,severity,message\n4,error,\"invalid calendar date, really\"\n"
        );
    }

    fn arb_row() -> impl Strategy<Value = String> {
        let dob = prop_oneof![
            Just(String::new()),
            (1900..2000i32).prop_map(|y| y.to_string()),
            (1900..2000i32, 1..=12u32).prop_map(|(y, m)| format!("{y}-{m:02}")),
            (1900..2000i32, 1..=12u32, 1..=31u32)
                .prop_map(|(y, m, d)| format!("{y}-{m:02}-{d:02}")),
        ];
        let gender = prop_oneof![Just("F"), Just("m"), Just("female"), Just(""), Just("q")];
        let zip = prop_oneof![Just("02139"), Just("021"), Just(""), Just("1234")];
        (dob, gender, zip, "[a-z ,]{0,6}").prop_map(|(d, g, z, p)| format!("{d},{g},{z},\"{p}\""))
    }

    proptest! {
        #[test]
        fn profile_reading_accounts_for_every_row(rows in proptest::collection::vec(arb_row(), 0..30)) {
            let mut input = String::from("id,dob,gender,zip,payload\n");
            for (i, r) in rows.iter().enumerate() {
                input.push_str(&format!("id{i},{r}\n"));
            }
            let parsed = read_profiles(input.as_bytes()).unwrap();
            prop_assert_eq!(parsed.records.len() + parsed.diagnostics.len(), rows.len());

            // canonical form is a fixed point of read/write
            let mut canon = Vec::new();
            write_profiles(&mut canon, &parsed.records).unwrap();
            let reread = read_profiles(canon.as_slice()).unwrap();
            prop_assert!(reread.diagnostics.is_empty());
            prop_assert_eq!(&reread.records, &parsed.records);
            let mut again = Vec::new();
            write_profiles(&mut again, &reread.records).unwrap();
            prop_assert_eq!(canon, again);
        }
    }
}
