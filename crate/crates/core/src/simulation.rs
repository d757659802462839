//! Synthetic worlds with known ground truth, registry snapshots degraded by
//! sampling, mobility and nickname noise, and the end-to-end experiment.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::to_canonical_string;
use crate::demographics::{BirthDate, BirthLevel, DemographicKey, Gender, ZipCode};
use crate::error::{Error, Result};
use crate::identifiability::date_space;
use crate::ingestion::{Profile, RegistryRecord};
use crate::linkage::{
    build_index, combine, link, overlap_matrix, score, CandidateLists, MatchStatus, OverlapMatrix,
    ScoreReport, Source,
};
use crate::names::{names_match, normalize_name, MatchMode, NicknameTable, PersonName};

const GIVEN_NAMES: &str = include_str!("../data/given_names.txt");
const SURNAMES: &str = include_str!("../data/surnames.txt");

fn name_list(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub population_size: usize,
    pub zip_weights: Vec<(ZipCode, f64)>,
    /// Width of the birth window in years.
    pub age_window: u32,
    /// Probability that a person is female.
    pub gender_split: f64,
    pub seed: u64,
    /// Last day of the birth window.
    pub latest_birth: NaiveDate,
}

impl WorldConfig {
    /// Ten ZIPs of uneven size in one 3-digit area, a 60-year window.
    pub fn standard(population_size: usize, seed: u64) -> Self {
        let zips = [
            ("02138", 14.0),
            ("02139", 18.0),
            ("02140", 9.0),
            ("02141", 6.0),
            ("02142", 3.0),
            ("02143", 12.0),
            ("02144", 10.0),
            ("02145", 11.0),
            ("02148", 10.0),
            ("02149", 7.0),
        ];
        WorldConfig {
            population_size,
            zip_weights: zips
                .iter()
                .map(|(z, w)| (ZipCode::zip5(z).unwrap(), *w))
                .collect(),
            age_window: 60,
            gender_split: 0.5,
            seed,
            latest_birth: NaiveDate::from_ymd_opt(1994, 12, 31).unwrap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.population_size == 0 {
            return bad("population_size must be at least 1");
        }
        if self.zip_weights.is_empty() {
            return bad("at least one zip weight is required");
        }
        if self
            .zip_weights
            .iter()
            .any(|(z, w)| !(w.is_finite() && *w > 0.0) || z.digits().len() != 5)
        {
            return bad("zip weights must be positive and zips 5-digit");
        }
        if self.age_window == 0 {
            return bad("age_window must be at least 1 year");
        }
        if !(0.0..=1.0).contains(&self.gender_split) {
            return bad("gender_split must lie in [0, 1]");
        }
        let capacity = name_list(GIVEN_NAMES).len() * name_list(SURNAMES).len();
        if self.population_size > capacity / 2 {
            return bad("population_size exceeds the bundled name lists");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Person {
    pub name: PersonName,
    pub key: DemographicKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub persons: Vec<Person>,
    zips: Vec<ZipCode>,
    weights: Vec<f64>,
}

impl World {
    /// Synthetic profile ids: `P000001`, `P000002`, ...
    pub fn profile_id(index: usize) -> String {
        format!("P{:06}", index + 1)
    }

    /// Every person becomes a profile carrying their world key.
    pub fn profiles(&self) -> Vec<Profile> {
        self.persons
            .iter()
            .enumerate()
            .map(|(i, p)| Profile {
                id: Self::profile_id(i),
                key: p.key.clone(),
                payload: String::new(),
            })
            .collect()
    }

    pub fn truth(&self) -> BTreeMap<String, PersonName> {
        self.persons
            .iter()
            .enumerate()
            .map(|(i, p)| (Self::profile_id(i), p.name.clone()))
            .collect()
    }

    pub fn keys(&self) -> Vec<DemographicKey> {
        self.persons.iter().map(|p| p.key.clone()).collect()
    }
}

/// Names are distinct; birth dates are uniform over the window's days.
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let given = name_list(GIVEN_NAMES);
    let surnames = name_list(SURNAMES);
    let weights: Vec<f64> = cfg.zip_weights.iter().map(|(_, w)| *w).collect();
    let zips: Vec<ZipCode> = cfg.zip_weights.iter().map(|(z, _)| z.clone()).collect();
    let pick_zip = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let days = date_space(BirthLevel::Full, cfg.age_window) as i64;

    let mut used = HashSet::with_capacity(cfg.population_size);
    let mut persons = Vec::with_capacity(cfg.population_size);
    while persons.len() < cfg.population_size {
        let (g, s) = (
            rng.gen_range(0..given.len()),
            rng.gen_range(0..surnames.len()),
        );
        if !used.insert((g, s)) {
            continue;
        }
        let name = normalize_name(&format!("{} {}", given[g], surnames[s]))?;
        let birth =
            BirthDate::from_naive(cfg.latest_birth - Duration::days(rng.gen_range(0..days)))?;
        let gender = if rng.gen_bool(cfg.gender_split) {
            Gender::Female
        } else {
            Gender::Male
        };
        let zip = zips[pick_zip.sample(&mut rng)].clone();
        persons.push(Person {
            name,
            key: DemographicKey::new(birth, gender, zip),
        });
    }
    Ok(World {
        persons,
        zips,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotConfig {
    pub sampling_fraction: f64,
    pub mobility_rate: f64,
    pub nickname_rate: f64,
    pub seed: u64,
}

impl SnapshotConfig {
    pub fn new(
        sampling_fraction: f64,
        mobility_rate: f64,
        nickname_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = SnapshotConfig {
            sampling_fraction,
            mobility_rate,
            nickname_rate,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [
            ("sampling fraction", self.sampling_fraction),
            ("mobility rate", self.mobility_rate),
            ("nickname rate", self.nickname_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{label} {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Where a registry row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub person: usize,
    pub moved: bool,
    pub nicknamed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub records: Vec<RegistryRecord>,
    pub origins: Vec<Origin>,
}

impl Snapshot {
    pub fn kept_fraction(&self, world: &World) -> f64 {
        self.records.len() as f64 / world.persons.len() as f64
    }
}

/// Samples the registry. A kept person moves to a different ZIP (drawn by
/// weight) with probability `m`, and their given name is swapped for a
/// nickname partner with probability `nickname_rate` when they have one.
pub fn snapshot_registry(
    world: &World,
    cfg: &SnapshotConfig,
    nicknames: &NicknameTable,
) -> Result<Snapshot> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut origins = Vec::new();
    for (i, person) in world.persons.iter().enumerate() {
        if !rng.gen_bool(cfg.sampling_fraction) {
            continue;
        }
        let mut key = person.key.clone();
        let mut moved = false;
        if rng.gen_bool(cfg.mobility_rate) && world.zips.len() > 1 {
            let here = world.zips.iter().position(|z| *z == key.zip);
            let weights: Vec<f64> = world
                .weights
                .iter()
                .enumerate()
                .map(|(j, w)| if Some(j) == here { 0.0 } else { *w })
                .collect();
            let pick =
                WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            key.zip = world.zips[pick.sample(&mut rng)].clone();
            moved = true;
        }
        let mut name = person.name.clone();
        let mut nicknamed = false;
        if rng.gen_bool(cfg.nickname_rate) {
            let partners = nicknames.partners(person.name.given());
            if !partners.is_empty() {
                let alias = &partners[rng.gen_range(0..partners.len())];
                name = normalize_name(&format!("{alias} {}", person.name.surname()))?;
                nicknamed = true;
            }
        }
        records.push(RegistryRecord::new(name, key)?);
        origins.push(Origin {
            person: i,
            moved,
            nicknamed,
        });
    }
    Ok(Snapshot { records, origins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongCause {
    /// The named person moved into the profile's ZIP.
    Mover,
    /// Someone else with the profile's exact key was the only one sampled.
    SameKeyCollision,
    /// The right person under a nickname, rejected by exact scoring.
    NameVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WrongMatch {
    pub profile_id: String,
    pub source: Source,
    pub cause: WrongCause,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceStats {
    pub kept_fraction: f64,
    pub unique: usize,
    pub ambiguous: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub profiles: usize,
    /// Profiles with at least one combined name, over all profiles.
    pub unique_rate: f64,
    /// Correct combined names over all combined names; `None` when there
    /// are none.
    pub precision: Option<f64>,
    /// Profiles with a correct combined name, over all profiles.
    pub recall: f64,
    pub score: ScoreReport,
    pub overlap: OverlapMatrix,
    pub sources: BTreeMap<Source, SourceStats>,
    pub wrong: Vec<WrongMatch>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Value {
        let score_rows: Value = self
            .score
            .per_source
            .iter()
            .map(|(s, r)| {
                (
                    s.label().to_string(),
                    json!({"wrong": r.wrong, "total": r.total}),
                )
            })
            .collect::<serde_json::Map<_, _>>()
            .into();
        let sources: Value = self
            .sources
            .iter()
            .map(|(s, st)| {
                (
                    s.label().to_string(),
                    json!({"kept_fraction": st.kept_fraction, "unique": st.unique, "ambiguous": st.ambiguous, "none": st.none}),
                )
            })
            .collect::<serde_json::Map<_, _>>()
            .into();
        let mut causes: BTreeMap<&str, usize> = BTreeMap::new();
        for w in &self.wrong {
            let label = match w.cause {
                WrongCause::Mover => "mover",
                WrongCause::SameKeyCollision => "same_key_collision",
                WrongCause::NameVariant => "name_variant",
            };
            *causes.entry(label).or_default() += 1;
        }
        json!({
            "profiles": self.profiles,
            "unique_rate": self.unique_rate,
            "precision": self.precision,
            "recall": self.recall,
            "mode": self.score.mode.label(),
            "score": {
                "per_source": score_rows,
                "combined": {"wrong": self.score.combined.wrong, "total": self.score.combined.total},
            },
            "overlap": {
                "sources": self.overlap.sources.iter().map(|s| s.label()).collect::<Vec<_>>(),
                "cells": self.overlap.cells,
            },
            "sources": sources,
            "wrong_causes": causes,
        })
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_json())
    }
}

/// Links every world member against each source snapshot, combines the
/// strategies and scores against the world's ground truth.
pub fn run_experiment(
    world: &World,
    snapshots: &[(Source, SnapshotConfig)],
    mode: MatchMode,
    nicknames: &NicknameTable,
) -> Result<ExperimentResult> {
    let profiles = world.profiles();
    let truth = world.truth();
    let mut lists = CandidateLists::new();
    let mut sources = BTreeMap::new();
    let mut wrong = Vec::new();
    for (source, cfg) in snapshots {
        let snap = snapshot_registry(world, cfg, nicknames)?;
        let (index, _) = build_index(&snap.records);
        let linked = link(&profiles, &index, *source)?;
        for cand in &linked.candidates {
            let pos: usize = cand.profile_id[1..].parse::<usize>().expect("synthetic id") - 1;
            let target = &world.persons[pos];
            if names_match(&cand.name, &target.name, mode, nicknames) {
                continue;
            }
            wrong.push(WrongMatch {
                profile_id: cand.profile_id.clone(),
                source: *source,
                cause: audit(&snap, target, &cand.name, pos),
            });
        }
        sources.insert(
            *source,
            SourceStats {
                kept_fraction: snap.kept_fraction(world),
                unique: linked.count(|s| matches!(s, MatchStatus::Unique(_))),
                ambiguous: linked.count(|s| matches!(s, MatchStatus::Ambiguous(_))),
                none: linked.count(|s| matches!(s, MatchStatus::NoMatch)),
            },
        );
        lists.insert(*source, linked.candidates);
    }

    let report = score(&lists, &truth, mode, nicknames);
    let combined = combine(&lists, nicknames);
    let mut named = HashSet::new();
    let mut correct = HashSet::new();
    let mut right_entries = 0usize;
    for entry in &combined.entries {
        named.insert(entry.profile_id.as_str());
        if names_match(&entry.name, &truth[&entry.profile_id], mode, nicknames) {
            right_entries += 1;
            correct.insert(entry.profile_id.as_str());
        }
    }
    let n = profiles.len() as f64;
    Ok(ExperimentResult {
        profiles: profiles.len(),
        unique_rate: named.len() as f64 / n,
        precision: (!combined.entries.is_empty())
            .then(|| right_entries as f64 / combined.entries.len() as f64),
        recall: correct.len() as f64 / n,
        score: report,
        overlap: overlap_matrix(&lists),
        sources,
        wrong,
    })
}

fn audit(snap: &Snapshot, target: &Person, named: &PersonName, target_pos: usize) -> WrongCause {
    let origin = snap
        .records
        .iter()
        .zip(&snap.origins)
        .find(|(r, _)| r.key == target.key && r.name == *named)
        .map(|(_, o)| *o)
        .expect("a unique match names a registry row with the profile's key");
    if origin.person == target_pos {
        WrongCause::NameVariant
    } else if origin.moved {
        WrongCause::Mover
    } else {
        WrongCause::SameKeyCollision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub population: usize,
    pub f: f64,
    pub m: f64,
    pub nickname_rate: f64,
    pub seed: u64,
    pub kept_fraction: f64,
    pub unique_rate: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub wrong: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub population: usize,
    pub f: Vec<f64>,
    pub m: Vec<f64>,
    pub nickname_rate: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: MatchMode,
}

/// Snapshot seed derived from a world seed so one number pins a run.
pub fn snapshot_seed(world_seed: u64) -> u64 {
    world_seed ^ 0x9e37_79b9_7f4a_7c15
}

/// One voter-data experiment per (f, m, rate, seed).
pub fn run_sweep(cfg: &SweepConfig, nicknames: &NicknameTable) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let world = generate_world(&WorldConfig::standard(cfg.population, seed))?;
        for &f in &cfg.f {
            for &m in &cfg.m {
                for &rate in &cfg.nickname_rate {
                    let snap = SnapshotConfig::new(f, m, rate, snapshot_seed(seed))?;
                    let r =
                        run_experiment(&world, &[(Source::VoterData, snap)], cfg.mode, nicknames)?;
                    rows.push(SweepRow {
                        population: cfg.population,
                        f,
                        m,
                        nickname_rate: rate,
                        seed,
                        kept_fraction: r.sources[&Source::VoterData].kept_fraction,
                        unique_rate: r.unique_rate,
                        precision: r.precision,
                        recall: r.recall,
                        wrong: r.score.combined.wrong,
                        total: r.score.combined.total,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "population",
    "f",
    "m",
    "nickname_rate",
    "seed",
    "kept_fraction",
    "unique_rate",
    "precision",
    "recall",
    "wrong",
    "total",
];

pub fn write_sweep<W: Write>(sink: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.population.to_string(),
            r.f.to_string(),
            r.m.to_string(),
            r.nickname_rate.to_string(),
            r.seed.to_string(),
            r.kept_fraction.to_string(),
            r.unique_rate.to_string(),
            r.precision.map(|p| p.to_string()).unwrap_or_default(),
            r.recall.to_string(),
            r.wrong.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
