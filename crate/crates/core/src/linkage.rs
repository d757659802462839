//! Exact-key linkage of de-identified profiles to named registries.
//!
//! A profile is named only when its key's registry bucket holds exactly one
//! person. Candidates from several strategies can then be combined,
//! cross-tabulated ([`OverlapMatrix`]) and scored against ground truth
//! ([`ScoreReport`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::demographics::{DemographicKey, KeyLevel};
use crate::error::{Error, Result};
use crate::ingestion::{Diagnostic, Profile, RegistryRecord};
use crate::names::{names_match, normalize_name, MatchMode, NicknameTable, PersonName};

/// Attack strategy that produced a name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    EmbeddedName,
    VoterData,
    PublicRecords,
}

impl Source {
    pub const ALL: [Source; 3] = [
        Source::EmbeddedName,
        Source::VoterData,
        Source::PublicRecords,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Source::EmbeddedName => "embedded_name",
            Source::VoterData => "voter_data",
            Source::PublicRecords => "public_records",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "embedded_name" | "embedded" | "name" => Ok(Source::EmbeddedName),
            "voter_data" | "voter" => Ok(Source::VoterData),
            "public_records" | "public" => Ok(Source::PublicRecords),
            other => Err(Error::InvalidConfig(format!("unknown source {other:?}"))),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Registry names bucketed by demographic key, all at one level.
#[derive(Debug, Clone)]
pub struct KeyIndex {
    level: KeyLevel,
    buckets: HashMap<DemographicKey, Vec<PersonName>>,
    entries: usize,
}

impl KeyIndex {
    pub fn level(&self) -> KeyLevel {
        self.level
    }

    pub fn bucket(&self, key: &DemographicKey) -> &[PersonName] {
        self.buckets.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Total names held after duplicate collapsing.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    /// Classifies a bucket: one distinct normalized name is a unique match
    /// even if raw spellings differ.
    pub fn resolve(&self, key: &DemographicKey) -> MatchStatus {
        let bucket = self.bucket(key);
        let distinct: BTreeSet<(&str, &str)> = bucket.iter().map(PersonName::tokens).collect();
        match distinct.len() {
            0 => MatchStatus::NoMatch,
            1 => MatchStatus::Unique(bucket[0].clone()),
            n => MatchStatus::Ambiguous(n),
        }
    }
}

/// Indexes a registry at full date / 5-digit ZIP. Records repeating both
/// raw name and key collapse into one entry and are reported.
pub fn build_index(registry: &[RegistryRecord]) -> (KeyIndex, Vec<Diagnostic>) {
    build_index_at(registry, KeyLevel::FULL).expect("registry records are at full level")
}

/// Indexes a registry after generalizing every key to `level`.
pub fn build_index_at(
    registry: &[RegistryRecord],
    level: KeyLevel,
) -> Result<(KeyIndex, Vec<Diagnostic>)> {
    let mut buckets: HashMap<DemographicKey, Vec<PersonName>> = HashMap::new();
    let mut diagnostics = Vec::new();
    let mut entries = 0;
    for (pos, rec) in registry.iter().enumerate() {
        let key = rec.key.generalize_to(level)?;
        let bucket = buckets.entry(key).or_default();
        if bucket.iter().any(|n| n.raw() == rec.name.raw()) {
            diagnostics.push(Diagnostic::warning(
                pos as u64 + 1,
                format!("duplicate registry entry {} {}", rec.name, rec.key),
            ));
        } else {
            bucket.push(rec.name.clone());
            entries += 1;
        }
    }
    Ok((
        KeyIndex {
            level,
            buckets,
            entries,
        },
        diagnostics,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchStatus {
    Unique(PersonName),
    /// Number of distinct names in the bucket; the names themselves are withheld.
    Ambiguous(usize),
    NoMatch,
}

impl MatchStatus {
    pub fn label(&self) -> String {
        match self {
            MatchStatus::Unique(_) => "unique".into(),
            MatchStatus::Ambiguous(n) => format!("ambiguous:{n}"),
            MatchStatus::NoMatch => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub profile_id: String,
    pub status: MatchStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NameCandidate {
    pub profile_id: String,
    pub name: PersonName,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkResult {
    pub outcomes: Vec<MatchOutcome>,
    pub candidates: Vec<NameCandidate>,
    pub diagnostics: Vec<Diagnostic>,
}

impl LinkResult {
    pub fn count(&self, pred: impl Fn(&MatchStatus) -> bool) -> usize {
        self.outcomes.iter().filter(|o| pred(&o.status)).count()
    }
}

/// Links each profile whose key is at the index level.
///
/// Profiles at a coarser (or incomparable) level are skipped with a "key
/// incomplete" diagnostic; a profile strictly finer than the index is a
/// caller error.
pub fn link(profiles: &[Profile], index: &KeyIndex, source: Source) -> Result<LinkResult> {
    let mut result = LinkResult::default();
    for (pos, profile) in profiles.iter().enumerate() {
        let level = profile.key.level();
        if level != index.level() {
            if level.is_finer_or_equal(index.level()) {
                return Err(Error::MixedGeneralization {
                    expected: index.level(),
                    found: level,
                });
            }
            result.diagnostics.push(Diagnostic::warning(
                pos as u64 + 1,
                format!("profile {}: key incomplete ({level})", profile.id),
            ));
            continue;
        }
        let status = index.resolve(&profile.key);
        if let MatchStatus::Unique(name) = &status {
            result.candidates.push(NameCandidate {
                profile_id: profile.id.clone(),
                name: name.clone(),
                source,
            });
        }
        result.outcomes.push(MatchOutcome {
            profile_id: profile.id.clone(),
            status,
        });
    }
    Ok(result)
}

/// Candidate lists keyed by the strategy that produced them.
pub type CandidateLists = BTreeMap<Source, Vec<NameCandidate>>;

/// Groups a flat candidate list by source.
pub fn group_by_source(candidates: impl IntoIterator<Item = NameCandidate>) -> CandidateLists {
    let mut lists = CandidateLists::new();
    for c in candidates {
        lists.entry(c.source).or_default().push(c);
    }
    lists
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedCandidate {
    pub profile_id: String,
    pub name: PersonName,
    pub sources: Vec<Source>,
}

/// A profile named differently by two or more strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub profile_id: String,
    pub names: Vec<(Source, PersonName)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Combined {
    pub entries: Vec<CombinedCandidate>,
    pub conflicts: Vec<Conflict>,
}

/// Unions candidate lists by profile. Names that agree under nickname
/// tolerance merge into one entry listing every source; disagreeing names
/// stay as separate entries and the profile is reported as a conflict.
pub fn combine(lists: &CandidateLists, nicknames: &NicknameTable) -> Combined {
    let mut per_profile: BTreeMap<&str, Vec<(Source, &PersonName)>> = BTreeMap::new();
    for (source, list) in lists {
        for c in list {
            per_profile
                .entry(c.profile_id.as_str())
                .or_default()
                .push((*source, &c.name));
        }
    }
    let mut out = Combined::default();
    for (profile_id, named) in per_profile {
        let mut groups: Vec<CombinedCandidate> = Vec::new();
        for (source, name) in &named {
            let found = groups
                .iter_mut()
                .find(|g| names_match(&g.name, name, MatchMode::NicknameTolerant, nicknames));
            match found {
                Some(g) => g.sources.push(*source),
                None => groups.push(CombinedCandidate {
                    profile_id: profile_id.to_string(),
                    name: (*name).clone(),
                    sources: vec![*source],
                }),
            }
        }
        if groups.len() > 1 {
            out.conflicts.push(Conflict {
                profile_id: profile_id.to_string(),
                names: named.iter().map(|(s, n)| (*s, (*n).clone())).collect(),
            });
        }
        out.entries.extend(groups);
    }
    out
}

/// Profile-level overlap between strategies. Diagonal cells count profiles
/// named by that strategy alone; off-diagonal cells count profiles named by
/// both strategies, whether or not the names agree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapMatrix {
    pub sources: Vec<Source>,
    pub cells: Vec<Vec<usize>>,
}

impl OverlapMatrix {
    pub fn cell(&self, a: Source, b: Source) -> Option<usize> {
        let i = self.sources.iter().position(|s| *s == a)?;
        let j = self.sources.iter().position(|s| *s == b)?;
        Some(self.cells[i][j])
    }

    pub fn row_total(&self, i: usize) -> usize {
        self.cells[i].iter().sum()
    }

    /// Rows per source plus a trailing `total` column and row.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        let mut header = vec!["source".to_string()];
        header.extend(self.sources.iter().map(|s| s.label().to_string()));
        header.push("total".into());
        w.write_record(&header)?;
        for (i, s) in self.sources.iter().enumerate() {
            let mut row = vec![s.label().to_string()];
            row.extend(self.cells[i].iter().map(usize::to_string));
            row.push(self.row_total(i).to_string());
            w.write_record(&row)?;
        }
        let mut totals = vec!["total".to_string()];
        totals.extend(
            (0..self.sources.len())
                .map(|j| self.cells.iter().map(|r| r[j]).sum::<usize>().to_string()),
        );
        totals.push(String::new());
        w.write_record(&totals)?;
        w.flush()?;
        Ok(())
    }
}

pub fn overlap_matrix(lists: &CandidateLists) -> OverlapMatrix {
    let sources: Vec<Source> = lists.keys().copied().collect();
    let sets: Vec<BTreeSet<&str>> = lists
        .values()
        .map(|l| l.iter().map(|c| c.profile_id.as_str()).collect())
        .collect();
    let n = sources.len();
    let mut cells = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cells[i][j] = if i == j {
                sets[i]
                    .iter()
                    .filter(|p| (0..n).all(|k| k == i || !sets[k].contains(*p)))
                    .count()
            } else {
                sets[i].intersection(&sets[j]).count()
            };
        }
    }
    OverlapMatrix { sources, cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScoreRow {
    pub wrong: usize,
    pub total: usize,
    /// Candidates whose profile has no ground truth; not in `total`.
    pub unverifiable: usize,
}

impl ScoreRow {
    /// Share of correct names rounded half-up to a whole percent; `None`
    /// when nothing was scored.
    pub fn correct_pct(&self) -> Option<u32> {
        if self.total == 0 {
            return None;
        }
        let (t, c) = (self.total as u64, (self.total - self.wrong) as u64);
        Some(((200 * c + t) / (2 * t)) as u32)
    }

    pub fn correct_fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| (self.total - self.wrong) as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub mode: MatchMode,
    pub per_source: BTreeMap<Source, ScoreRow>,
    pub combined: ScoreRow,
}

impl ScoreReport {
    /// `source,wrong,total,correct_pct` with a final `combined` row.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        w.write_record(["source", "wrong", "total", "correct_pct"])?;
        let pct = |r: &ScoreRow| r.correct_pct().map(|p| p.to_string()).unwrap_or_default();
        for (s, r) in &self.per_source {
            w.write_record([
                s.label().to_string(),
                r.wrong.to_string(),
                r.total.to_string(),
                pct(r),
            ])?;
        }
        let c = &self.combined;
        w.write_record([
            "combined".to_string(),
            c.wrong.to_string(),
            c.total.to_string(),
            pct(c),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn tally<'a>(
    named: impl IntoIterator<Item = (&'a str, &'a PersonName)>,
    truth: &BTreeMap<String, PersonName>,
    mode: MatchMode,
    nicknames: &NicknameTable,
) -> ScoreRow {
    let mut row = ScoreRow {
        wrong: 0,
        total: 0,
        unverifiable: 0,
    };
    for (profile_id, name) in named {
        match truth.get(profile_id) {
            None => row.unverifiable += 1,
            Some(true_name) => {
                row.total += 1;
                if !names_match(name, true_name, mode, nicknames) {
                    row.wrong += 1;
                }
            }
        }
    }
    row
}

/// Scores each strategy's candidates and the combined list against truth.
pub fn score(
    lists: &CandidateLists,
    truth: &BTreeMap<String, PersonName>,
    mode: MatchMode,
    nicknames: &NicknameTable,
) -> ScoreReport {
    let per_source = lists
        .iter()
        .map(|(s, list)| {
            let named = list.iter().map(|c| (c.profile_id.as_str(), &c.name));
            (*s, tally(named, truth, mode, nicknames))
        })
        .collect();
    let combined = combine(lists, nicknames);
    let named = combined
        .entries
        .iter()
        .map(|c| (c.profile_id.as_str(), &c.name));
    ScoreReport {
        mode,
        per_source,
        combined: tally(named, truth, mode, nicknames),
    }
}

pub const MATCH_HEADER: [&str; 4] = ["profile_id", "status", "name", "sources"];

/// Match outcomes as `profile_id,status,name,sources`.
pub fn write_outcomes<W: Write>(sink: W, outcomes: &[MatchOutcome], source: Source) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(MATCH_HEADER)?;
    for o in outcomes {
        let name = match &o.status {
            MatchStatus::Unique(n) => n.normalized(),
            _ => String::new(),
        };
        w.write_record([
            o.profile_id.as_str(),
            &o.status.label(),
            &name,
            source.label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Combined candidates in the same layout, sources joined with `;`.
pub fn write_combined<W: Write>(sink: W, combined: &Combined) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(MATCH_HEADER)?;
    for e in &combined.entries {
        let sources: Vec<&str> = e.sources.iter().map(|s| s.label()).collect();
        w.write_record([
            e.profile_id.as_str(),
            "unique",
            &e.name.normalized(),
            &sources.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads unique rows of a match CSV back as candidates (first listed
/// source). Non-unique rows are ignored.
pub fn read_match_candidates<R: Read>(source: R) -> Result<Vec<NameCandidate>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != MATCH_HEADER {
        return Err(Error::MalformedHeader {
            expected: MATCH_HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if &row[1] != "unique" {
            continue;
        }
        let bad = |e: Error| Error::InvalidRow {
            line,
            message: e.to_string(),
        };
        let source = Source::parse(row[3].split(';').next().unwrap_or_default()).map_err(bad)?;
        out.push(NameCandidate {
            profile_id: row[0].to_string(),
            name: normalize_name(&row[2]).map_err(bad)?,
            source,
        });
    }
    Ok(out)
}

pub const TRUTH_HEADER: [&str; 3] = ["profile_id", "given", "surname"];

/// Ground truth as `profile_id,given,surname`.
pub fn read_truth<R: Read>(source: R) -> Result<BTreeMap<String, PersonName>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRUTH_HEADER {
        return Err(Error::MalformedHeader {
            expected: TRUTH_HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut truth = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let name =
            normalize_name(&format!("{} {}", &row[1], &row[2])).map_err(|e| Error::InvalidRow {
                line,
                message: e.to_string(),
            })?;
        truth.insert(row[0].to_string(), name);
    }
    Ok(truth)
}

pub fn write_truth<W: Write>(sink: W, truth: &BTreeMap<String, PersonName>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(TRUTH_HEADER)?;
    for (id, name) in truth {
        w.write_record([id.as_str(), name.given(), name.surname()])?;
    }
    w.flush()?;
    Ok(())
}
