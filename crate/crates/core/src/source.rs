//! Programs as line sequences, deletion masks over them, and finished slices.
//!
//! Lines are numbered from 1 and never renumbered: a deletion is recorded in
//! a [`DeletionMask`] against the original numbering and only applied when a
//! candidate is rendered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criterion::SlicingCriterion;
use crate::digest::files_digest;

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("source file not found: {0}")]
    Missing(PathBuf),
    #[error("source file is not valid UTF-8 text: {0}")]
    Encoding(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mask references {path}:{line}, which does not exist")]
    MaskOutOfRange { path: String, line: usize },
    #[error("mask covers {0}, which is not a sliceable file")]
    NotSliceable(String),
    #[error("slices describe different programs or criteria")]
    Mismatch,
    #[error("malformed slice record {path}: {message}")]
    BadRecord { path: PathBuf, message: String },
}

/// One source file held as physical lines without their terminators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    lines: Vec<String>,
    /// Whether the last line was terminated by `\n`. A `\r` before the
    /// newline stays part of the line text, so CRLF files round-trip too.
    trailing_newline: bool,
}

impl SourceUnit {
    pub fn from_text(path: impl Into<String>, text: &str) -> Self {
        let trailing_newline = text.ends_with('\n');
        let body = if trailing_newline { &text[..text.len() - 1] } else { text };
        let lines = if text.is_empty() { Vec::new() } else { body.split('\n').map(str::to_string).collect() };
        Self { path: path.into(), lines, trailing_newline }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn trailing_newline(&self) -> bool {
        self.trailing_newline
    }

    /// Line `n`, 1-indexed.
    pub fn line(&self, n: usize) -> Option<&str> {
        n.checked_sub(1).and_then(|i| self.lines.get(i)).map(String::as_str)
    }

    pub fn lines(&self) -> impl Iterator<Item = (usize, &str)> {
        self.lines.iter().enumerate().map(|(i, l)| (i + 1, l.as_str()))
    }

    pub fn text(&self) -> String {
        join_lines(self.lines.iter().map(String::as_str), self.trailing_newline)
    }
}

pub(crate) fn join_lines<'a>(lines: impl Iterator<Item = &'a str>, trailing_newline: bool) -> String {
    let mut out = String::new();
    let mut any = false;
    for l in lines {
        if any {
            out.push('\n');
        }
        out.push_str(l);
        any = true;
    }
    if any && trailing_newline {
        out.push('\n');
    }
    out
}

/// Reads each path relative to `root`. The unit keeps the relative path.
pub fn load_sources<P: AsRef<Path>>(root: &Path, paths: &[P]) -> Result<Vec<SourceUnit>, SourceError> {
    paths
        .iter()
        .map(|p| {
            let rel = p.as_ref();
            let full = root.join(rel);
            let bytes = fs::read(&full).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => SourceError::Missing(full.clone()),
                _ => SourceError::Io { path: full.clone(), source: e },
            })?;
            let text = String::from_utf8(bytes).map_err(|_| SourceError::Encoding(full.clone()))?;
            Ok(SourceUnit::from_text(rel.to_string_lossy().replace('\\', "/"), &text))
        })
        .collect()
}

/// A line of the original program.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineRef {
    pub path: String,
    pub line: usize,
}

impl fmt::Display for LineRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path, self.line)
    }
}

/// Set of deleted original lines, grouped by file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DeletionMask {
    deleted: BTreeMap<String, BTreeSet<usize>>,
}

impl DeletionMask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, line: usize) -> bool {
        self.deleted.entry(path.to_string()).or_default().insert(line)
    }

    pub fn contains(&self, path: &str, line: usize) -> bool {
        self.deleted.get(path).is_some_and(|s| s.contains(&line))
    }

    pub fn len(&self) -> usize {
        self.deleted.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_file(&self, path: &str) -> impl Iterator<Item = usize> + '_ {
        self.deleted.get(path).into_iter().flatten().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = LineRef> + '_ {
        self.deleted.iter().flat_map(|(p, s)| s.iter().map(move |&line| LineRef { path: p.clone(), line }))
    }

    pub fn with(&self, extra: impl IntoIterator<Item = LineRef>) -> Self {
        let mut out = self.clone();
        for r in extra {
            out.insert(&r.path, r.line);
        }
        out
    }

    pub fn is_subset(&self, other: &DeletionMask) -> bool {
        self.iter().all(|r| other.contains(&r.path, r.line))
    }
}

impl FromIterator<LineRef> for DeletionMask {
    fn from_iter<T: IntoIterator<Item = LineRef>>(iter: T) -> Self {
        DeletionMask::new().with(iter)
    }
}

/// Renders `unit` with the masked lines physically removed.
pub fn render(unit: &SourceUnit, mask: &DeletionMask) -> Result<String, SourceError> {
    if let Some(bad) = mask.in_file(&unit.path).find(|&l| l == 0 || l > unit.len()) {
        return Err(SourceError::MaskOutOfRange { path: unit.path.clone(), line: bad });
    }
    Ok(join_lines(unit.lines().filter(|(n, _)| !mask.contains(&unit.path, *n)).map(|(_, l)| l), unit.trailing_newline))
}

/// The program under slicing: every file it needs, and which of them may
/// lose lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub units: Vec<SourceUnit>,
    pub sliceable: BTreeSet<String>,
}

impl Program {
    pub fn new(units: Vec<SourceUnit>, sliceable: impl IntoIterator<Item = String>) -> Self {
        Self { units, sliceable: sliceable.into_iter().collect() }
    }

    /// A program of one file, which is sliceable.
    pub fn single(unit: SourceUnit) -> Self {
        let path = unit.path.clone();
        Self::new(vec![unit], [path])
    }

    pub fn unit(&self, path: &str) -> Option<&SourceUnit> {
        self.units.iter().find(|u| u.path == path)
    }

    /// Content digest of the original files; identifies the program in slice records.
    pub fn id(&self) -> String {
        let texts: Vec<String> = self.units.iter().map(SourceUnit::text).collect();
        files_digest(self.units.iter().zip(&texts).map(|(u, t)| (u.path.as_str(), t.as_str())))
    }

    /// All lines of sliceable files, in file then line order.
    pub fn sliceable_lines(&self) -> impl Iterator<Item = LineRef> + '_ {
        self.units
            .iter()
            .filter(|u| self.sliceable.contains(&u.path))
            .flat_map(|u| (1..=u.len()).map(move |line| LineRef { path: u.path.clone(), line }))
    }

    pub fn all_lines(&self) -> impl Iterator<Item = LineRef> + '_ {
        self.units.iter().flat_map(|u| (1..=u.len()).map(move |line| LineRef { path: u.path.clone(), line }))
    }

    pub fn check_mask(&self, mask: &DeletionMask) -> Result<(), SourceError> {
        for r in mask.iter() {
            let unit =
                self.unit(&r.path).ok_or_else(|| SourceError::MaskOutOfRange { path: r.path.clone(), line: r.line })?;
            if !self.sliceable.contains(&r.path) {
                return Err(SourceError::NotSliceable(r.path));
            }
            if r.line == 0 || r.line > unit.len() {
                return Err(SourceError::MaskOutOfRange { path: r.path, line: r.line });
            }
        }
        Ok(())
    }

    /// Renders every file; non-sliceable files come out unmodified.
    pub fn render(&self, mask: &DeletionMask) -> Result<Vec<RenderedFile>, SourceError> {
        self.check_mask(mask)?;
        self.units.iter().map(|u| Ok(RenderedFile { path: u.path.clone(), text: render(u, mask)? })).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFile {
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceStats {
    pub passes: usize,
    pub candidates: usize,
    pub accepted: usize,
    /// False when the pass cap stopped the engine before a fixpoint.
    pub fixpoint: bool,
    /// Set when a determinism probe of the finished slice saw varying behavior.
    #[serde(default)]
    pub nondeterministic: bool,
}

/// A finished slice. `retained` and `deleted` partition the program's lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub program: String,
    pub instantiation_id: String,
    pub criterion: SlicingCriterion,
    pub retained: BTreeMap<String, Vec<usize>>,
    pub deleted: BTreeMap<String, Vec<usize>>,
    pub stats: SliceStats,
}

impl SliceRecord {
    pub fn new(
        program: &Program,
        instantiation_id: impl Into<String>,
        criterion: SlicingCriterion,
        mask: &DeletionMask,
        stats: SliceStats,
    ) -> Self {
        let mut retained = BTreeMap::new();
        let mut deleted = BTreeMap::new();
        for u in &program.units {
            let (gone, kept): (Vec<usize>, Vec<usize>) = (1..=u.len()).partition(|&l| mask.contains(&u.path, l));
            retained.insert(u.path.clone(), kept);
            deleted.insert(u.path.clone(), gone);
        }
        Self { program: program.id(), instantiation_id: instantiation_id.into(), criterion, retained, deleted, stats }
    }

    pub fn mask(&self) -> DeletionMask {
        self.deleted.iter().flat_map(|(p, ls)| ls.iter().map(move |&line| LineRef { path: p.clone(), line })).collect()
    }

    pub fn retained_set(&self) -> BTreeSet<LineRef> {
        self.retained.iter().flat_map(|(p, ls)| ls.iter().map(move |&line| LineRef { path: p.clone(), line })).collect()
    }

    pub fn retains(&self, path: &str, line: usize) -> bool {
        self.retained.get(path).is_some_and(|ls| ls.binary_search(&line).is_ok())
    }

    pub fn retained_count(&self) -> usize {
        self.retained.values().map(Vec::len).sum()
    }

    /// (program, criterion) pair that comparisons are grouped by.
    pub fn identity(&self) -> SliceIdentity {
        SliceIdentity { program: self.program.clone(), criterion: self.criterion.clone() }
    }

    /// retained ∪ deleted covers every line exactly once.
    pub fn check_partition(&self, program: &Program) -> bool {
        program.units.iter().all(|u| {
            let kept = self.retained.get(&u.path).map(Vec::as_slice).unwrap_or(&[]);
            let gone = self.deleted.get(&u.path).map(Vec::as_slice).unwrap_or(&[]);
            let mut all: Vec<usize> = kept.iter().chain(gone).copied().collect();
            all.sort_unstable();
            all.len() == u.len() && all.iter().enumerate().all(|(i, &l)| l == i + 1)
        }) && self.retained.keys().chain(self.deleted.keys()).all(|p| program.unit(p).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceIdentity {
    pub program: String,
    pub criterion: SlicingCriterion,
}

impl fmt::Display for SliceIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", &self.program[..self.program.len().min(12)], self.criterion)
    }
}

/// Retained lines present only in `a`, and only in `b`.
pub fn diff_slices(a: &SliceRecord, b: &SliceRecord) -> Result<(BTreeSet<LineRef>, BTreeSet<LineRef>), SourceError> {
    if a.identity() != b.identity() {
        return Err(SourceError::Mismatch);
    }
    let ra = a.retained_set();
    let rb = b.retained_set();
    Ok((ra.difference(&rb).cloned().collect(), rb.difference(&ra).cloned().collect()))
}

pub const SLICE_FILE: &str = "slice.json";

/// Writes the rendered slice and `slice.json` into `dir`.
pub fn write_slice_dir(dir: &Path, program: &Program, record: &SliceRecord) -> Result<(), SourceError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SourceError::Io { path, source }
    };
    for file in program.render(&record.mask())? {
        let target = dir.join(&file.path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&target, &file.text).map_err(io(&target))?;
    }
    let json = serde_json::to_string_pretty(record).expect("slice record serializes");
    let target = dir.join(SLICE_FILE);
    fs::write(&target, json + "\n").map_err(io(&target))
}

pub fn read_slice_record(path: &Path) -> Result<SliceRecord, SourceError> {
    let text = fs::read_to_string(path).map_err(|e| SourceError::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| SourceError::BadRecord { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> SourceUnit {
        let text: String = (1..=n).map(|i| format!("line {i}\n")).collect();
        SourceUnit::from_text("a.toy", &text)
    }

    fn mask(lines: &[usize]) -> DeletionMask {
        lines.iter().map(|&line| LineRef { path: "a.toy".into(), line }).collect()
    }

    #[test]
    fn loads_lines_one_indexed() {
        let u = SourceUnit::from_text("x", "int a;\na = 1;\n");
        assert_eq!(u.len(), 2);
        assert_eq!(u.line(1), Some("int a;"));
        assert_eq!(u.line(2), Some("a = 1;"));
        assert_eq!(u.line(0), None);
        assert_eq!(u.line(3), None);
    }

    #[test]
    fn empty_file_has_no_lines() {
        let u = SourceUnit::from_text("x", "");
        assert_eq!(u.len(), 0);
        assert_eq!(u.text(), "");
    }

    #[test]
    fn round_trips_odd_endings() {
        for text in ["a\nb", "a\nb\n", "\n", "\n\n", "a\r\nb\r\n", "x"] {
            assert_eq!(SourceUnit::from_text("x", text).text(), text, "{text:?}");
        }
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bin.dat"), [0xff, 0xfe, 0x00]).unwrap();
        assert!(matches!(load_sources(dir.path(), &["nope.toy"]), Err(SourceError::Missing(_))));
        assert!(matches!(load_sources(dir.path(), &["bin.dat"]), Err(SourceError::Encoding(_))));
    }

    #[test]
    fn file_without_trailing_newline_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = "main() {\n  print 1;\n}";
        fs::write(dir.path().join("m.toy"), bytes).unwrap();
        let units = load_sources(dir.path(), &["m.toy"]).unwrap();
        assert_eq!(render(&units[0], &DeletionMask::new()).unwrap().as_bytes(), bytes.as_bytes());
    }

    #[test]
    fn render_drops_masked_lines() {
        let u = unit(5);
        let out = render(&u, &mask(&[3])).unwrap();
        assert_eq!(out, "line 1\nline 2\nline 4\nline 5\n");
        assert_eq!(render(&u, &DeletionMask::new()).unwrap(), u.text());
    }

    #[test]
    fn render_rejects_out_of_range_mask() {
        assert!(matches!(render(&unit(2), &mask(&[3])), Err(SourceError::MaskOutOfRange { line: 3, .. })));
    }

    #[test]
    fn fig1_without_line_8() {
        let u = SourceUnit::from_text("fig1.toy", include_str!("../fixtures/fig1.toy"));
        let m: DeletionMask = [LineRef { path: "fig1.toy".into(), line: 8 }].into_iter().collect();
        let out = render(&u, &m).unwrap();
        assert_eq!(out.lines().count(), 14);
        assert!(!out.contains("b = 42;"));
    }

    #[test]
    fn non_sliceable_files_cannot_be_masked() {
        let p = Program::new(vec![unit(3), SourceUnit::from_text("lib.toy", "x\n")], ["a.toy".to_string()]);
        let m: DeletionMask = [LineRef { path: "lib.toy".into(), line: 1 }].into_iter().collect();
        assert!(matches!(p.render(&m), Err(SourceError::NotSliceable(_))));
        let files = p.render(&mask(&[1])).unwrap();
        assert_eq!(files[1].text, "x\n");
    }

    fn record(retained: &[usize], n: usize) -> SliceRecord {
        let p = Program::single(unit(n));
        let m = mask(&(1..=n).filter(|l| !retained.contains(l)).collect::<Vec<_>>());
        SliceRecord::new(&p, "G", SlicingCriterion::new("a.toy", 1, "x"), &m, SliceStats::default())
    }

    #[test]
    fn diff_of_identical_records_is_empty() {
        let a = record(&[1, 2, 3], 4);
        let (x, y) = diff_slices(&a, &a).unwrap();
        assert!(x.is_empty() && y.is_empty());
    }

    #[test]
    fn diff_reports_one_sided_lines() {
        let (x, y) = diff_slices(&record(&[1, 2, 3], 4), &record(&[1, 2], 4)).unwrap();
        assert_eq!(x.into_iter().map(|r| r.line).collect::<Vec<_>>(), vec![3]);
        assert!(y.is_empty());
    }

    #[test]
    fn diff_rejects_different_criteria() {
        let a = record(&[1], 2);
        let mut b = a.clone();
        b.criterion.line = 2;
        assert!(matches!(diff_slices(&a, &b), Err(SourceError::Mismatch)));
    }

    #[test]
    fn slice_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Program::single(unit(4));
        let r = record(&[1, 4], 4);
        write_slice_dir(dir.path(), &p, &r).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.toy")).unwrap(), "line 1\nline 4\n");
        assert_eq!(read_slice_record(&dir.path().join(SLICE_FILE)).unwrap(), r);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SLICE_FILE)).unwrap()).unwrap();
        for key in ["instantiation_id", "criterion", "retained", "deleted", "stats"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["criterion"]["variable"], "x");
        assert_eq!(json["retained"]["a.toy"], serde_json::json!([1, 4]));
    }

    proptest! {
        #[test]
        fn render_line_count_and_monotonicity(
            n in 0usize..30,
            a in proptest::collection::btree_set(1usize..30, 0..30),
            b in proptest::collection::btree_set(1usize..30, 0..30),
        ) {
            let u = unit(n);
            let m1 = mask(&a.iter().copied().filter(|&l| l <= n).collect::<Vec<_>>());
            let m2 = m1.with(b.iter().filter(|&&l| l <= n).map(|&line| LineRef { path: "a.toy".into(), line }));
            let r1 = render(&u, &m1).unwrap();
            let r2 = render(&u, &m2).unwrap();
            prop_assert_eq!(r1.lines().count(), n - m1.len());
            let s1: BTreeSet<&str> = r1.lines().collect();
            prop_assert!(r2.lines().all(|l| s1.contains(l)));
        }

        #[test]
        fn diff_matches_brute_force(
            a in proptest::collection::vec(any::<bool>(), 12),
            b in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let keep = |v: &[bool]| (1..=12).filter(|&l| v[l - 1]).collect::<Vec<_>>();
            let (ka, kb) = (keep(&a), keep(&b));
            let ra = record(&ka, 12);
            let rb = record(&kb, 12);
            prop_assert!(ra.check_partition(&Program::single(unit(12))));
            let (x, y) = diff_slices(&ra, &rb).unwrap();
            let mut only_a = Vec::new();
            let mut only_b = Vec::new();
            for l in 1..=12 {
                match (a[l - 1], b[l - 1]) {
                    (true, false) => only_a.push(l),
                    (false, true) => only_b.push(l),
                    _ => {}
                }
            }
            prop_assert_eq!(x.into_iter().map(|r| r.line).collect::<Vec<_>>(), only_a);
            prop_assert_eq!(y.into_iter().map(|r| r.line).collect::<Vec<_>>(), only_b);
        }
    }
}
