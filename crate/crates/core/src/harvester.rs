//! Names embedded in the member filenames of downloaded archives.
//!
//! Only the archive's member directory is consulted; member payloads are
//! never decompressed.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Seek, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;
use zip::result::ZipError;
use zip::ZipArchive;

use crate::error::{Error, Result};
use crate::linkage::{NameCandidate, Source};
use crate::names::{normalize_name, PersonName};

const BUNDLED_STOPLIST: &str = include_str!("../data/stoplist.txt");

/// Lower-case tokens that never form part of a name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopList {
    tokens: BTreeSet<String>,
}

impl StopList {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPLIST)
    }

    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopList { tokens }
    }

    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(&token.to_lowercase())
    }
}

#[derive(Debug, Clone)]
pub struct HarvestConfig {
    pub stoplist: StopList,
    /// Only tokens starting with an upper-case letter count as name tokens.
    pub require_capitalized: bool,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            stoplist: StopList::bundled(),
            require_capitalized: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveFinding {
    pub outer_filename: String,
    pub profile_id_guess: String,
    pub member_filename: String,
    pub extracted: Option<PersonName>,
}

/// Text before the first underscore of the outer filename, or empty.
pub fn profile_id_guess(outer_filename: &str) -> String {
    match outer_filename.split_once('_') {
        Some((prefix, _)) => prefix.to_string(),
        None => String::new(),
    }
}

fn is_name_token(token: &str, cfg: &HarvestConfig) -> bool {
    let mut chars = token.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    token.chars().all(char::is_alphabetic) && (!cfg.require_capitalized || first.is_uppercase())
}

/// Finds the first pair of adjacent name-like tokens in a filename.
///
/// The basename is split on `_`, `-`, `.` and whitespace. Stop-listed
/// tokens, tokens with digits and single-character tokens are dropped; the
/// first two consecutive remaining tokens that are alphabetic (and
/// capitalized, unless disabled) become given name and surname.
pub fn extract_name_from_filename(member: &str, cfg: &HarvestConfig) -> Option<PersonName> {
    let base = member.rsplit(['/', '\\']).next().unwrap_or(member);
    let tokens: Vec<&str> = base
        .split(|c: char| c == '_' || c == '-' || c == '.' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().any(|c| c.is_ascii_digit()))
        .filter(|t| t.chars().count() > 1)
        .filter(|t| !cfg.stoplist.contains(t))
        .collect();
    tokens
        .windows(2)
        .find(|w| is_name_token(w[0], cfg) && is_name_token(w[1], cfg))
        .and_then(|w| normalize_name(&format!("{} {}", w[0], w[1])).ok())
}

fn map_zip_error(e: ZipError) -> Error {
    match e {
        ZipError::Io(io) => Error::CorruptArchive(io.to_string()),
        other => Error::CorruptArchive(other.to_string()),
    }
}

/// One finding per file member of a zip archive, in directory order.
pub fn harvest_archive<R: Read + Seek>(
    container: R,
    outer_filename: &str,
    cfg: &HarvestConfig,
) -> Result<Vec<ArchiveFinding>> {
    let mut archive = ZipArchive::new(container).map_err(map_zip_error)?;
    let guess = profile_id_guess(outer_filename);
    let mut findings = Vec::with_capacity(archive.len());
    for i in 0..archive.len() {
        // raw access reads the entry header only, no decompression
        let entry = archive.by_index_raw(i).map_err(map_zip_error)?;
        if entry.encrypted() {
            return Err(Error::EncryptedArchive);
        }
        if entry.is_dir() {
            continue;
        }
        let member = entry.name().to_string();
        findings.push(ArchiveFinding {
            outer_filename: outer_filename.to_string(),
            profile_id_guess: guess.clone(),
            extracted: extract_name_from_filename(&member, cfg),
            member_filename: member,
        });
    }
    Ok(findings)
}

/// An archive that could not be harvested, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileError {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreeHarvest {
    pub findings: Vec<ArchiveFinding>,
    pub errors: Vec<FileError>,
}

fn is_archive(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("zip"))
}

/// Harvests every `.zip` file below `root`. Other files are ignored and a
/// failing archive is recorded without stopping the walk. Findings are
/// sorted by (outer filename, member filename).
pub fn harvest_tree(root: &Path, cfg: &HarvestConfig) -> Result<TreeHarvest> {
    std::fs::read_dir(root).map_err(|e| Error::RootUnreadable {
        path: root.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = TreeHarvest::default();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                out.errors.push(FileError {
                    path: e.path().map(Path::to_path_buf).unwrap_or_default(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() || !is_archive(entry.path()) {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .to_path_buf();
        let outer = entry.file_name().to_string_lossy().into_owned();
        let result = File::open(entry.path())
            .map_err(Error::from)
            .and_then(|f| harvest_archive(BufReader::new(f), &outer, cfg));
        match result {
            Ok(found) => out.findings.extend(found),
            Err(e) => out.errors.push(FileError {
                path: rel,
                message: e.to_string(),
            }),
        }
    }
    out.findings.sort_by(|a, b| {
        (&a.outer_filename, &a.member_filename).cmp(&(&b.outer_filename, &b.member_filename))
    });
    Ok(out)
}

/// One embedded-name candidate per guessed profile id, taking the first
/// extracted name in finding order.
pub fn findings_to_candidates(findings: &[ArchiveFinding]) -> Vec<NameCandidate> {
    let mut seen = HashSet::new();
    findings
        .iter()
        .filter(|f| !f.profile_id_guess.is_empty())
        .filter_map(|f| f.extracted.as_ref().map(|n| (f, n)))
        .filter(|(f, _)| seen.insert(f.profile_id_guess.clone()))
        .map(|(f, n)| NameCandidate {
            profile_id: f.profile_id_guess.clone(),
            name: n.clone(),
            source: Source::EmbeddedName,
        })
        .collect()
}

pub const FINDINGS_HEADER: [&str; 5] = ["outer", "profile_id_guess", "member", "given", "surname"];

pub fn write_findings<W: Write>(sink: W, findings: &[ArchiveFinding]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(FINDINGS_HEADER)?;
    for f in findings {
        let (given, surname) = f.extracted.as_ref().map_or(("", ""), |n| n.tokens());
        w.write_record([
            f.outer_filename.as_str(),
            &f.profile_id_guess,
            &f.member_filename,
            given,
            surname,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_findings<R: Read>(source: R) -> Result<Vec<ArchiveFinding>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != FINDINGS_HEADER {
        return Err(Error::MalformedHeader {
            expected: FINDINGS_HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let extracted = if row[3].is_empty() && row[4].is_empty() {
            None
        } else {
            Some(
                normalize_name(&format!("{} {}", &row[3], &row[4])).map_err(|e| {
                    Error::InvalidRow {
                        line,
                        message: e.to_string(),
                    }
                })?,
            )
        };
        out.push(ArchiveFinding {
            outer_filename: row[0].to_string(),
            profile_id_guess: row[1].to_string(),
            member_filename: row[2].to_string(),
            extracted,
        });
    }
    Ok(out)
}
