//! Defenses: threshold-based key generalization, date-of-birth editing in
//! Continuity of Care Record (CCR) documents, and before/after risk grids.

use std::ops::Range;

use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::to_canonical_string;
use crate::demographics::{BirthLevel, DemographicKey, KeyLevel, ZipLevel};
use crate::error::{Error, Result};
use crate::identifiability::{risk_report, RiskQuery, RiskReport};
use crate::ingestion::PopulationTable;

/// Year-only dates everywhere; ZIPs cut to two digits when the 5-digit
/// area holds fewer than `pop_threshold` people, otherwise to three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafeHarborPolicy {
    pop_threshold: u64,
    below_action: ZipLevel,
    at_or_above_action: ZipLevel,
    date_action: BirthLevel,
}

impl Default for SafeHarborPolicy {
    fn default() -> Self {
        SafeHarborPolicy {
            pop_threshold: 20_000,
            below_action: ZipLevel::Zip2,
            at_or_above_action: ZipLevel::Zip3,
            date_action: BirthLevel::YearOnly,
        }
    }
}

impl SafeHarborPolicy {
    pub fn new(
        pop_threshold: u64,
        below_action: ZipLevel,
        at_or_above_action: ZipLevel,
        date_action: BirthLevel,
    ) -> Result<Self> {
        if pop_threshold == 0 {
            return Err(Error::InvalidConfig(
                "population threshold must be positive".into(),
            ));
        }
        Ok(SafeHarborPolicy {
            pop_threshold,
            below_action,
            at_or_above_action,
            date_action,
        })
    }

    pub fn pop_threshold(&self) -> u64 {
        self.pop_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafeHarborOutcome {
    pub key: DemographicKey,
    /// Set when the ZIP had no population entry and was treated as small.
    pub unknown_zip_population: bool,
}

/// Generalizes a key under `policy`. Fields already coarser than the policy
/// asks for are left alone, which makes the operation idempotent.
pub fn apply_safe_harbor(
    key: &DemographicKey,
    table: &PopulationTable,
    policy: &SafeHarborPolicy,
) -> SafeHarborOutcome {
    let mut unknown = false;
    let zip_target = if key.zip.level() == ZipLevel::Zip5 {
        match table.zip_total(&key.zip) {
            Some(pop) if pop >= policy.pop_threshold => policy.at_or_above_action,
            Some(_) => policy.below_action,
            None => {
                unknown = true;
                policy.below_action
            }
        }
    } else {
        key.zip.level()
    };
    SafeHarborOutcome {
        key: key.coarsen_at_least(policy.date_action, zip_target),
        unknown_zip_population: unknown,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthEdit {
    /// Keep only the four-digit year.
    YearOnly,
    /// Delete the date-of-birth element.
    Remove,
}

impl BirthEdit {
    pub fn parse(token: &str) -> Result<Self> {
        match token.trim().to_ascii_lowercase().as_str() {
            "year" | "year_only" | "yearonly" => Ok(BirthEdit::YearOnly),
            "remove" => Ok(BirthEdit::Remove),
            other => Err(Error::InvalidConfig(format!(
                "unknown scrub mode {other:?}"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BirthEdit::YearOnly => "year",
            BirthEdit::Remove => "remove",
        }
    }
}

/// Byte offsets of the patient's date of birth inside the raw document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BirthLocation {
    /// The whole `<DateOfBirth>...</DateOfBirth>` element.
    pub element: Range<usize>,
    /// Text content of its `<ExactDateTime>` child, when present.
    pub exact_text: Option<Range<usize>>,
}

/// A parsed CCR document. The raw bytes are kept untouched; edits splice
/// them rather than re-serializing the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcrDocument {
    raw: Vec<u8>,
    birth: Option<BirthLocation>,
}

fn local<'a>(node: &roxmltree::Node<'a, 'a>) -> &'a str {
    node.tag_name().name()
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.is_element() && local(c) == name)
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<String> {
    child(node, name)
        .and_then(|c| c.text())
        .map(|t| t.trim().to_string())
}

impl CcrDocument {
    /// Parses `raw` and locates the patient's
    /// `Actor/Person/DateOfBirth/ExactDateTime`.
    ///
    /// The patient actor is the one whose `ActorObjectID` equals
    /// `Patient/ActorID`. Without a `Patient` element the first actor that
    /// is a person is taken, whether or not it carries a date of birth.
    pub fn parse(raw: Vec<u8>) -> Result<Self> {
        let birth = {
            let text = std::str::from_utf8(&raw)
                .map_err(|e| Error::NotWellFormed(format!("not UTF-8: {e}")))?;
            let opts = roxmltree::ParsingOptions {
                allow_dtd: true,
                ..Default::default()
            };
            let doc = roxmltree::Document::parse_with_options(text, opts)
                .map_err(|e| Error::NotWellFormed(e.to_string()))?;
            locate_birth(&doc)
        };
        Ok(CcrDocument { raw, birth })
    }

    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.raw
    }

    pub fn birth(&self) -> Option<&BirthLocation> {
        self.birth.as_ref()
    }
}

fn locate_birth(doc: &roxmltree::Document<'_>) -> Option<BirthLocation> {
    let root = doc.root_element();
    let patient_id = root
        .descendants()
        .find(|n| n.is_element() && local(n) == "Patient")
        .and_then(|p| child_text(p, "ActorID"));
    let actor = root
        .descendants()
        .filter(|n| n.is_element() && local(n) == "Actor" && child(*n, "Person").is_some())
        .find(|a| match &patient_id {
            Some(id) => child_text(*a, "ActorObjectID").as_deref() == Some(id.as_str()),
            None => true,
        })?;
    let dob = child(child(actor, "Person")?, "DateOfBirth")?;
    let exact_text = child(dob, "ExactDateTime").and_then(|e| {
        let texts: Vec<_> = e.children().filter(|c| c.is_text()).collect();
        match (texts.first(), texts.last()) {
            (Some(first), Some(last)) => Some(first.range().start..last.range().end),
            _ => None,
        }
    });
    Some(BirthLocation {
        element: dob.range(),
        exact_text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EditSummary {
    pub mode: BirthEdit,
    pub edited: bool,
    /// Replaced input bytes, as `[start, end)` offsets.
    pub span: Option<(usize, usize)>,
    pub replacement_len: usize,
    pub no_birth_element: bool,
}

impl EditSummary {
    pub fn to_json(&self) -> Value {
        json!({
            "mode": self.mode.label(),
            "edited": self.edited,
            "span": self.span.map(|(s, e)| json!({"start": s, "end": e})),
            "replacement_len": self.replacement_len,
            "flag": if self.no_birth_element { Value::from("no-birth-element") } else { Value::Null },
        })
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_json())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcrEdit {
    pub output: Vec<u8>,
    pub summary: EditSummary,
}

/// Rewrites the date of birth to its year or deletes the element. Every
/// byte outside the replaced span is copied unchanged; a document without a
/// date of birth comes back byte-identical with `no_birth_element` set.
pub fn ccr_set_birth(doc: &CcrDocument, mode: BirthEdit) -> Result<CcrEdit> {
    let Some(loc) = doc.birth() else {
        return Ok(CcrEdit {
            output: doc.raw.clone(),
            summary: EditSummary {
                mode,
                edited: false,
                span: None,
                replacement_len: 0,
                no_birth_element: true,
            },
        });
    };
    let (span, replacement) = match mode {
        BirthEdit::Remove => (loc.element.clone(), String::new()),
        BirthEdit::YearOnly => {
            let span = loc
                .exact_text
                .clone()
                .ok_or_else(|| Error::UnrecognizedBirthText(String::new()))?;
            let text = String::from_utf8_lossy(&doc.raw[span.clone()]);
            let year: String = text.trim().chars().take(4).collect();
            if year.len() != 4 || !year.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::UnrecognizedBirthText(text.trim().to_string()));
            }
            (span, year)
        }
    };
    let mut output = Vec::with_capacity(doc.raw.len());
    output.extend_from_slice(&doc.raw[..span.start]);
    output.extend_from_slice(replacement.as_bytes());
    output.extend_from_slice(&doc.raw[span.end..]);
    Ok(CcrEdit {
        output,
        summary: EditSummary {
            mode,
            edited: true,
            span: Some((span.start, span.end)),
            replacement_len: replacement.len(),
            no_birth_element: false,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIf {
    pub before: RiskReport,
    pub after: RiskReport,
}

impl WhatIf {
    pub fn to_json(&self) -> Value {
        json!({"before": self.before.to_json(), "after": self.after.to_json()})
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_json())
    }
}

/// Risk grids before and after generalizing the query's key to `target`.
/// Cells at or above `target` are unchanged; finer cells take the value of
/// the cell they collapse into.
pub fn whatif(query: &RiskQuery, table: &PopulationTable, target: KeyLevel) -> Result<WhatIf> {
    let current = query.key_level();
    if target.birth < current.birth {
        return Err(Error::RefinementRequested {
            field: "birth",
            current: current.birth.label(),
            requested: target.birth.label(),
        });
    }
    if target.zip < current.zip {
        return Err(Error::RefinementRequested {
            field: "zip",
            current: current.zip.label(),
            requested: target.zip.label(),
        });
    }
    let before = risk_report(query, table)?;
    let after = before.floored_at(target);
    Ok(WhatIf { before, after })
}
