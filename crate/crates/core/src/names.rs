//! Person names, normalization and nickname-tolerant matching.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_NICKNAMES: &str = include_str!("../data/nicknames.csv");

/// Lower-case Latin letters with diacritics and their ASCII spelling.
/// Characters not listed here are kept as they are.
const ASCII_FOLDS: &[(char, &str)] = &[
    ('à', "a"),
    ('á', "a"),
    ('â', "a"),
    ('ã', "a"),
    ('ä', "a"),
    ('å', "a"),
    ('ā', "a"),
    ('ă', "a"),
    ('ą', "a"),
    ('æ', "ae"),
    ('ç', "c"),
    ('ć', "c"),
    ('ĉ', "c"),
    ('ċ', "c"),
    ('č', "c"),
    ('ď', "d"),
    ('đ', "d"),
    ('ð', "d"),
    ('è', "e"),
    ('é', "e"),
    ('ê', "e"),
    ('ë', "e"),
    ('ē', "e"),
    ('ĕ', "e"),
    ('ė', "e"),
    ('ę', "e"),
    ('ě', "e"),
    ('ĝ', "g"),
    ('ğ', "g"),
    ('ġ', "g"),
    ('ģ', "g"),
    ('ĥ', "h"),
    ('ħ', "h"),
    ('ì', "i"),
    ('í', "i"),
    ('î', "i"),
    ('ï', "i"),
    ('ĩ', "i"),
    ('ī', "i"),
    ('ĭ', "i"),
    ('į', "i"),
    ('ı', "i"),
    ('ĳ', "ij"),
    ('ĵ', "j"),
    ('ķ', "k"),
    ('ĺ', "l"),
    ('ļ', "l"),
    ('ľ', "l"),
    ('ŀ', "l"),
    ('ł', "l"),
    ('ñ', "n"),
    ('ń', "n"),
    ('ņ', "n"),
    ('ň', "n"),
    ('ò', "o"),
    ('ó', "o"),
    ('ô', "o"),
    ('õ', "o"),
    ('ö', "o"),
    ('ø', "o"),
    ('ō', "o"),
    ('ŏ', "o"),
    ('ő', "o"),
    ('œ', "oe"),
    ('ŕ', "r"),
    ('ŗ', "r"),
    ('ř', "r"),
    ('ś', "s"),
    ('ŝ', "s"),
    ('ş', "s"),
    ('š', "s"),
    ('ß', "ss"),
    ('ţ', "t"),
    ('ť', "t"),
    ('ŧ', "t"),
    ('þ', "th"),
    ('ù', "u"),
    ('ú', "u"),
    ('û', "u"),
    ('ü', "u"),
    ('ũ', "u"),
    ('ū', "u"),
    ('ŭ', "u"),
    ('ů', "u"),
    ('ű', "u"),
    ('ų', "u"),
    ('ŵ', "w"),
    ('ý', "y"),
    ('ÿ', "y"),
    ('ŷ', "y"),
    ('ź', "z"),
    ('ż', "z"),
    ('ž', "z"),
];

fn fold_char(c: char, out: &mut String) {
    match ASCII_FOLDS.iter().find(|(from, _)| *from == c) {
        Some((_, to)) => out.push_str(to),
        None => out.push(c),
    }
}

fn normalize_token(token: &str) -> Option<String> {
    let mut folded = String::with_capacity(token.len());
    for c in token.chars().flat_map(char::to_lowercase) {
        fold_char(c, &mut folded);
    }
    let kept: String = folded
        .chars()
        .filter(|c| c.is_alphabetic() || *c == '\'' || *c == '-')
        .collect();
    let kept = kept.trim_matches(|c| c == '\'' || c == '-');
    if kept.chars().any(char::is_alphabetic) {
        Some(kept.to_string())
    } else {
        None
    }
}

/// A normalized given name and surname plus the original spelling.
///
/// Equality, ordering and hashing use the normalized tokens only; `raw` is
/// carried along for display.
#[derive(Debug, Clone)]
pub struct PersonName {
    given: String,
    surname: String,
    raw: String,
}

impl PartialEq for PersonName {
    fn eq(&self, other: &Self) -> bool {
        self.tokens() == other.tokens()
    }
}

impl Eq for PersonName {}

impl std::hash::Hash for PersonName {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.tokens().hash(state);
    }
}

impl PartialOrd for PersonName {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PersonName {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.tokens().cmp(&other.tokens())
    }
}

impl PersonName {
    pub fn given(&self) -> &str {
        &self.given
    }

    pub fn surname(&self) -> &str {
        &self.surname
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// `given surname`, the form used for display and exports.
    pub fn normalized(&self) -> String {
        format!("{} {}", self.given, self.surname)
    }

    /// Given and surname tokens only; two names with the same tokens are
    /// the same name for matching purposes.
    pub fn tokens(&self) -> (&str, &str) {
        (&self.given, &self.surname)
    }
}

impl fmt::Display for PersonName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.given, self.surname)
    }
}

/// Lower-cases, folds diacritics to ASCII where a mapping exists, drops
/// digits and punctuation other than `'` and `-`, and splits on whitespace.
/// The first token is the given name and the last the surname.
pub fn normalize_name(raw: &str) -> Result<PersonName> {
    let tokens: Vec<String> = raw.split_whitespace().filter_map(normalize_token).collect();
    match tokens.as_slice() {
        [] => Err(Error::EmptyName),
        [_] => Err(Error::UnparseableName(raw.to_string())),
        [given, .., surname] => Ok(PersonName {
            given: given.clone(),
            surname: surname.clone(),
            raw: raw.to_string(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    NicknameTolerant,
}

impl MatchMode {
    pub fn parse(token: &str) -> Result<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(MatchMode::Exact),
            "tolerant" | "nickname" | "nickname_tolerant" | "nicknametolerant" => {
                Ok(MatchMode::NicknameTolerant)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown match mode {other:?}"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::NicknameTolerant => "nickname_tolerant",
        }
    }
}

/// Symmetric set of given-name equivalences such as (jim, james).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NicknameTable {
    pairs: BTreeSet<(String, String)>,
    partners: BTreeMap<String, Vec<String>>,
    prefix_fallback: bool,
}

impl Default for NicknameTable {
    fn default() -> Self {
        NicknameTable {
            pairs: BTreeSet::new(),
            partners: BTreeMap::new(),
            prefix_fallback: true,
        }
    }
}

impl NicknameTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The table shipped with the crate (`data/nicknames.csv`).
    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED_NICKNAMES.as_bytes()).expect("bundled nickname table is valid")
    }

    /// Reads `a,b` rows without a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut table = NicknameTable::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() == 1 && row[0].trim().is_empty() {
                continue;
            }
            if row.len() != 2 {
                return Err(Error::InvalidRow {
                    line,
                    message: format!("expected 2 columns, found {}", row.len()),
                });
            }
            let (a, b) = (row[0].trim(), row[1].trim());
            if a.is_empty() || b.is_empty() {
                return Err(Error::InvalidRow {
                    line,
                    message: "empty nickname token".into(),
                });
            }
            table.insert(a, b);
        }
        Ok(table)
    }

    pub fn with_prefix_fallback(mut self, enabled: bool) -> Self {
        self.prefix_fallback = enabled;
        self
    }

    pub fn prefix_fallback(&self) -> bool {
        self.prefix_fallback
    }

    pub fn insert(&mut self, a: &str, b: &str) {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a == b {
            return;
        }
        let pair = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if self.pairs.insert(pair) {
            self.partners.entry(a.clone()).or_default().push(b.clone());
            self.partners.entry(b).or_default().push(a);
        }
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        let pair = if a <= b { (a, b) } else { (b, a) };
        self.pairs.contains(&pair)
    }

    /// All tokens paired with `token`, in insertion order.
    pub fn partners(&self, token: &str) -> &[String] {
        self.partners
            .get(&token.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

fn prefix_related(a: &str, b: &str) -> bool {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    short.chars().count() >= 3 && long.starts_with(short)
}

pub fn names_match(
    a: &PersonName,
    b: &PersonName,
    mode: MatchMode,
    nicknames: &NicknameTable,
) -> bool {
    if a.surname != b.surname {
        return false;
    }
    if a.given == b.given {
        return true;
    }
    match mode {
        MatchMode::Exact => false,
        MatchMode::NicknameTolerant => {
            nicknames.contains(&a.given, &b.given)
                || (nicknames.prefix_fallback && prefix_related(&a.given, &b.given))
        }
    }
}
