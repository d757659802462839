use std::path::PathBuf;

use thiserror::Error;

use crate::demographics::KeyLevel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gender token {0:?} (expected f, female, m, male, u or unreported)")]
    InvalidGender(String),

    #[error("invalid birth date {value:?}: {reason}")]
    InvalidBirthDate { value: String, reason: String },

    #[error("invalid zip code {0:?}")]
    InvalidZip(String),

    #[error("name has no alphabetic token")]
    EmptyName,

    #[error("name {0:?} needs at least a given name and a surname")]
    UnparseableName(String),

    #[error("cannot refine {field} from {current} to {requested}")]
    RefinementRequested {
        field: &'static str,
        current: &'static str,
        requested: &'static str,
    },

    #[error("mixed generalization levels: expected {expected}, found {found}")]
    MixedGeneralization { expected: KeyLevel, found: KeyLevel },

    #[error("malformed header: expected {expected:?}, found {found:?}")]
    MalformedHeader { expected: String, found: String },

    #[error("overlapping population bins on lines {first_line} and {second_line}")]
    OverlappingBins { first_line: u64, second_line: u64 },

    #[error("line {line}: {message}")]
    InvalidRow { line: u64, message: String },

    #[error("probability undefined for persons={persons}, date values={date_values}")]
    Domain { persons: u64, date_values: u64 },

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("archive contains encrypted members")]
    EncryptedArchive,

    #[error("cannot read directory {path}: {message}")]
    RootUnreadable { path: PathBuf, message: String },

    #[error("document is not well-formed XML: {0}")]
    NotWellFormed(String),

    #[error("date of birth {0:?} does not start with a four-digit year")]
    UnrecognizedBirthText(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
