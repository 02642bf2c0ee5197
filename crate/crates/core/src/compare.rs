//! Pairwise comparison of slices taken by different instantiations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::source::{read_slice_record, SliceIdentity, SliceRecord, SourceError, SLICE_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("cannot compare slices of different programs or criteria: {} vs {}", .0.0, .0.1)]
    IdentityMismatch(Box<(SliceIdentity, SliceIdentity)>),
    #[error("comparison_count needs at least two instantiations, got {0}")]
    TooFewInstantiations(usize),
    #[error("instantiation {inst} has no slice for {identity}")]
    Ragged { inst: String, identity: SliceIdentity },
    #[error("instantiation {inst} has two slices for {identity}")]
    Duplicate { inst: String, identity: SliceIdentity },
    #[error("unknown instantiation {0:?}")]
    UnknownInstantiation(String),
    #[error("unknown filter {0:?} (expected nondet or criterion)")]
    UnknownFilter(String),
    #[error("malformed pair {0:?} (expected A:B)")]
    BadPair(String),
    #[error("no {SLICE_FILE} files under {0}")]
    EmptyCorpus(String),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComparisonOutcome {
    Equal,
    ProperSuperset,
    ProperSubset,
    Incomparable,
}

pub fn classify_sets<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> ComparisonOutcome {
    match (a.is_superset(b), a.is_subset(b)) {
        (true, true) => ComparisonOutcome::Equal,
        (true, false) => ComparisonOutcome::ProperSuperset,
        (false, true) => ComparisonOutcome::ProperSubset,
        (false, false) => ComparisonOutcome::Incomparable,
    }
}

/// Relation of `a`'s retained lines to `b`'s.
pub fn classify(a: &SliceRecord, b: &SliceRecord) -> Result<ComparisonOutcome, CompareError> {
    if a.identity() != b.identity() {
        return Err(CompareError::IdentityMismatch(Box::new((a.identity(), b.identity()))));
    }
    Ok(classify_sets(&a.retained_set(), &b.retained_set()))
}

/// Pairwise comparisons among `k` instantiations over `s` slice identities.
pub fn comparison_count(k: u64, s: u64) -> Result<u64, CompareError> {
    if k < 2 {
        return Err(CompareError::TooFewInstantiations(k as usize));
    }
    Ok(k * (k - 1) / 2 * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    NonDeterministic,
    CriterionAbsent,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::NonDeterministic => "nondet",
            FilterKind::CriterionAbsent => "criterion",
        })
    }
}

impl FromStr for FilterKind {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nondet" => Ok(FilterKind::NonDeterministic),
            "criterion" => Ok(FilterKind::CriterionAbsent),
            _ => Err(CompareError::UnknownFilter(s.to_string())),
        }
    }
}

pub fn parse_filters(s: &str) -> Result<Vec<FilterKind>, CompareError> {
    s.split(',').map(str::trim).filter(|f| !f.is_empty()).map(str::parse).collect()
}

/// Parses `A:B,C:D`. Instantiation ids may themselves contain `:`
/// (`toy-canary:1`), so each pair is split where both halves are known ids.
pub fn parse_pairs(s: &str, known: &BTreeSet<String>) -> Result<Vec<(String, String)>, CompareError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let splits: Vec<(&str, &str)> = p
                .match_indices(':')
                .map(|(i, _)| (&p[..i], &p[i + 1..]))
                .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                .collect();
            let known_split: Vec<_> = splits.iter().filter(|(a, b)| known.contains(*a) && known.contains(*b)).collect();
            match (known_split.as_slice(), splits.first()) {
                ([(a, b)], _) => Ok((a.to_string(), b.to_string())),
                ([], Some((a, b))) if splits.len() == 1 => Ok((a.to_string(), b.to_string())),
                _ => Err(CompareError::BadPair(p.to_string())),
            }
        })
        .collect()
}

/// Slice records grouped by instantiation, then by slice identity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub by_inst: BTreeMap<String, BTreeMap<SliceIdentity, SliceRecord>>,
}

impl Corpus {
    pub fn from_records(records: impl IntoIterator<Item = SliceRecord>) -> Result<Self, CompareError> {
        let mut by_inst: BTreeMap<String, BTreeMap<SliceIdentity, SliceRecord>> = BTreeMap::new();
        for r in records {
            let slot = by_inst.entry(r.instantiation_id.clone()).or_default();
            let identity = r.identity();
            if slot.contains_key(&identity) {
                return Err(CompareError::Duplicate { inst: r.instantiation_id, identity });
            }
            slot.insert(identity, r);
        }
        Ok(Self { by_inst })
    }

    /// Reads every `slice.json` below `root`.
    pub fn load(root: &Path) -> Result<Self, CompareError> {
        let mut records = Vec::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| SourceError::Io {
                path: root.to_path_buf(),
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("directory loop")),
            })?;
            if entry.file_type().is_file() && entry.file_name() == SLICE_FILE {
                records.push(read_slice_record(entry.path())?);
            }
        }
        if records.is_empty() {
            return Err(CompareError::EmptyCorpus(root.display().to_string()));
        }
        Self::from_records(records)
    }

    pub fn identities(&self) -> BTreeSet<SliceIdentity> {
        self.by_inst.values().flat_map(|m| m.keys().cloned()).collect()
    }

    pub fn len(&self) -> usize {
        self.identities().len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_inst.values().all(BTreeMap::is_empty)
    }

    /// Every instantiation must cover every identity.
    pub fn check_rectangular(&self) -> Result<(), CompareError> {
        for identity in self.identities() {
            for (inst, slices) in &self.by_inst {
                if !slices.contains_key(&identity) {
                    return Err(CompareError::Ragged { inst: inst.clone(), identity });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub identity: SliceIdentity,
    pub reasons: Vec<FilterKind>,
    /// Instantiations that triggered the filters.
    pub flagged_by: Vec<String>,
}

/// Removes flagged identities from every instantiation.
pub fn apply_filters(corpus: &Corpus, filters: &[FilterKind]) -> Result<(Corpus, Vec<Removal>), CompareError> {
    corpus.check_rectangular()?;
    let mut removals = Vec::new();
    for identity in corpus.identities() {
        let mut reasons = BTreeSet::new();
        let mut flagged_by = BTreeSet::new();
        for (inst, slices) in &corpus.by_inst {
            let r = &slices[&identity];
            if filters.contains(&FilterKind::NonDeterministic) && r.stats.nondeterministic {
                reasons.insert(FilterKind::NonDeterministic);
                flagged_by.insert(inst.clone());
            }
            if filters.contains(&FilterKind::CriterionAbsent) && !r.retains(&r.criterion.path, r.criterion.line) {
                reasons.insert(FilterKind::CriterionAbsent);
                flagged_by.insert(inst.clone());
            }
        }
        if !reasons.is_empty() {
            removals.push(Removal {
                identity,
                reasons: reasons.into_iter().collect(),
                flagged_by: flagged_by.into_iter().collect(),
            });
        }
    }
    let mut kept = corpus.clone();
    for slices in kept.by_inst.values_mut() {
        slices.retain(|id, _| !removals.iter().any(|r| &r.identity == id));
    }
    Ok((kept, removals))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryRow {
    pub left: String,
    pub right: String,
    pub equal: usize,
    pub superset: usize,
    pub subset: usize,
    pub incomparable: usize,
}

impl SummaryRow {
    pub fn total(&self) -> usize {
        self.equal + self.superset + self.subset + self.incomparable
    }

    pub fn pair(&self) -> String {
        format!("{}:{}", self.left, self.right)
    }
}

/// One row per pair, counting how the left slice relates to the right one.
pub fn summarize(corpus: &Corpus, pairs: &[(String, String)]) -> Result<Vec<SummaryRow>, CompareError> {
    corpus.check_rectangular()?;
    pairs
        .iter()
        .map(|(l, r)| {
            let get =
                |id: &String| corpus.by_inst.get(id).ok_or_else(|| CompareError::UnknownInstantiation(id.clone()));
            let (left, right) = (get(l)?, get(r)?);
            let mut row = SummaryRow { left: l.clone(), right: r.clone(), ..Default::default() };
            for (identity, a) in left {
                match classify(a, &right[identity])? {
                    ComparisonOutcome::Equal => row.equal += 1,
                    ComparisonOutcome::ProperSuperset => row.superset += 1,
                    ComparisonOutcome::ProperSubset => row.subset += 1,
                    ComparisonOutcome::Incomparable => row.incomparable += 1,
                }
            }
            Ok(row)
        })
        .collect()
}

pub fn render_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("pair,equal,superset,subset,incomparable\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.pair(), r.equal, r.superset, r.subset, r.incomparable).unwrap();
    }
    out
}

pub fn render_text(rows: &[SummaryRow], removals: &[Removal], filters: &[FilterKind]) -> String {
    let width = rows.iter().map(|r| r.pair().len()).max().unwrap_or(0).max(4);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n", "pair", "=", "⊃", "⊂", "≠");
    for r in rows {
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}",
            r.pair(),
            r.equal,
            r.superset,
            r.subset,
            r.incomparable
        )
        .unwrap();
    }
    if !filters.is_empty() {
        let names: Vec<String> = filters.iter().map(ToString::to_string).collect();
        writeln!(out, "\nfilters: {}; removed {} slice identities", names.join(","), removals.len()).unwrap();
        for r in removals {
            let why: Vec<String> = r.reasons.iter().map(ToString::to_string).collect();
            writeln!(out, "  {}  {} (flagged by {})", r.identity, why.join("+"), r.flagged_by.join(",")).unwrap();
        }
        if filters.contains(&FilterKind::NonDeterministic) {
            out.push_str("note: non-determinism is detected by repeated runs, which can miss rare variation\n");
        }
    }
    out
}
