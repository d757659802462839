//! Demographic re-identification and de-identification toolkit.
//!
//! Links de-identified profiles to named registries on the
//! (birth date, gender, ZIP) quasi-identifier, harvests names embedded in
//! archive member filenames, estimates how identifying a demographic
//! combination is, and generalizes keys or CCR documents to reduce that
//! risk. A synthetic-world simulator ties the pieces together with known
//! ground truth.

pub mod canonical;
pub mod demographics;
pub mod error;
pub mod harvester;
pub mod identifiability;
pub mod ingestion;
pub mod linkage;
pub mod names;
pub mod remediation;
pub mod simulation;

pub use error::{Error, Result};
