//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any failed. Built with `harness = false`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use orbslicer_core::cache::OutcomeCache;
use orbslicer_core::compare::{
    apply_filters, classify, classify_sets, comparison_count, ComparisonOutcome, Corpus, FilterKind,
};
use orbslicer_core::criterion::{instrument, render_instrumented, SlicingCriterion};
use orbslicer_core::engine::{EngineConfig, Instantiation, Session, Strategy};
use orbslicer_core::exec::{BuiltinEnv, CanarySeed, Candidate, EnvironmentSpec, ExecOptions, TestSuite};
use orbslicer_core::oracle::capture_oracle;
use orbslicer_core::pipeline::{load_manifest, run_slice, SliceRequest, MANIFEST_FILE, RUN_DIR};
use orbslicer_core::source::{DeletionMask, LineRef, Program, SliceRecord, SliceStats, SourceUnit};
use orbslicer_core::toy::gen::generate;
use orbslicer_core::verify::Verifier;

const RANDOM_PROGRAMS: u64 = 50;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(name: &str) -> Program {
    let text = std::fs::read_to_string(fixtures().join(name)).unwrap();
    Program::single(SourceUnit::from_text(name, &text))
}

fn env(b: BuiltinEnv) -> EnvironmentSpec {
    EnvironmentSpec::named_builtin(b)
}

fn zero() -> EnvironmentSpec {
    env(BuiltinEnv::Zero)
}
fn residue() -> EnvironmentSpec {
    env(BuiltinEnv::Residue)
}
fn canary1() -> EnvironmentSpec {
    env(BuiltinEnv::Canary(CanarySeed::Fixed(1)))
}
fn typed() -> EnvironmentSpec {
    env(BuiltinEnv::Typed)
}

fn inst(envs: &[EnvironmentSpec]) -> Instantiation {
    Instantiation::new(envs.to_vec())
}

/// One slicing job: a program, a criterion, a suite and the
/// instantiations to slice it under.
struct Case {
    name: String,
    program: Program,
    criterion: SlicingCriterion,
    suite: TestSuite,
    insts: Vec<Instantiation>,
}

struct Sliced {
    case: Case,
    records: Vec<SliceRecord>,
}

fn all_envs(insts: &[Instantiation]) -> Vec<EnvironmentSpec> {
    let mut envs: Vec<EnvironmentSpec> = Vec::new();
    for e in insts.iter().flat_map(|i| &i.envs) {
        if !envs.iter().any(|x| x.id == e.id) {
            envs.push(e.clone());
        }
    }
    envs
}

fn run_case(case: Case, cfg: &EngineConfig, cache: &OutcomeCache) -> Sliced {
    let envs = all_envs(&case.insts);
    let session =
        Session::prepare(&case.program, &case.criterion, &envs, &case.suite, cfg, cache, ExecOptions::default())
            .unwrap_or_else(|e| panic!("{}: {e}", case.name));
    let records = case.insts.iter().map(|i| session.slice(i).unwrap()).collect();
    Sliced { case, records }
}

fn fig1_case() -> Case {
    Case {
        name: "fig1".into(),
        program: fixture("fig1.toy"),
        criterion: SlicingCriterion::new("fig1.toy", 14, "y"),
        suite: TestSuite::single_empty(),
        insts: vec![inst(&[residue()]), inst(&[residue(), canary1()])],
    }
}

fn wc_case() -> Case {
    Case {
        name: "wc".into(),
        program: fixture("wc.toy"),
        criterion: SlicingCriterion::new("wc.toy", 6, "inword"),
        suite: TestSuite::from_dir(Some(&fixtures().join("tests/wc"))).unwrap(),
        insts: vec![inst(&[zero()]), inst(&[canary1()])],
    }
}

fn ishappy_case() -> Case {
    Case {
        name: "ishappy".into(),
        program: fixture("ishappy.toy"),
        criterion: SlicingCriterion::new("ishappy.toy", 10, "h"),
        suite: TestSuite::from_dir(Some(&fixtures().join("tests/ishappy"))).unwrap(),
        insts: vec![inst(&[residue()]), inst(&[typed()])],
    }
}

fn random_cases() -> Vec<Case> {
    (0..RANDOM_PROGRAMS)
        .map(|seed| {
            let g = generate(seed);
            let name = format!("gen{seed}.toy");
            Case {
                program: Program::single(SourceUnit::from_text(&name, &g.text)),
                criterion: SlicingCriterion::new(&name, g.criterion_line, &g.variable),
                suite: TestSuite::stdin(["3", "8"]),
                insts: vec![inst(&[residue()]), inst(&[residue(), canary1()])],
                name,
            }
        })
        .collect()
}

/// Slices shared by criteria 4 to 6, computed once.
struct Corpora {
    fixtures: Vec<Sliced>,
    random: Vec<Sliced>,
}

fn corpora() -> Corpora {
    let cfg = EngineConfig::default();
    let slice_all = |cases: Vec<Case>| -> Vec<Sliced> {
        cases.into_iter().map(|c| run_case(c, &cfg, &OutcomeCache::in_memory())).collect()
    };
    Corpora { fixtures: slice_all(vec![fig1_case(), wc_case(), ishappy_case()]), random: slice_all(random_cases()) }
}

fn retained(records: &[SliceRecord], i: usize) -> Vec<usize> {
    records[i].retained.values().next().unwrap().clone()
}

fn read_golden(name: &str) -> Vec<usize> {
    let text = std::fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let case = fig1_case();
    let Sliced { case, records } = run_case(case, &EngineConfig::default(), &OutcomeCache::in_memory());
    let elapsed = started.elapsed();
    let (r, rc) = (retained(&records, 0), retained(&records, 1));

    // Deleting line 8 first, from the unsliced program, is accepted under
    // residue and rejected once the canary environment joins.
    let cache = OutcomeCache::in_memory();
    let cfg = EngineConfig::default();
    let session = Session::prepare(
        &case.program,
        &case.criterion,
        &[residue(), canary1()],
        &case.suite,
        &cfg,
        &cache,
        ExecOptions::default(),
    )
    .unwrap();
    let line8 = [LineRef { path: "fig1.toy".into(), line: 8 }];
    let first_alone = session.attempt_window(&DeletionMask::new(), &line8, &case.insts[0]).unwrap();
    let first_both = session.attempt_window(&DeletionMask::new(), &line8, &case.insts[1]).unwrap();
    let isolated = matches!(first_alone, orbslicer_core::engine::Attempt::Accept(_))
        && matches!(first_both, orbslicer_core::engine::Attempt::Reject(_));

    let deleted_alone = !r.contains(&8);
    let kept_both = rc.contains(&8);
    let golden =
        r == read_golden("fig1_residue.retained.json") && rc == read_golden("fig1_residue_canary1.retained.json");
    let fast = elapsed < Duration::from_secs(5);
    check(
        deleted_alone && kept_both && golden && fast && isolated,
        format!(
            "line 8 deleted under {{residue}}: {deleted_alone}; retained under {{residue, canary:1}}: {kept_both}; \
             goldens match: {golden}; first-window isolation: {isolated}; {elapsed:.2?}; \
             retained {r:?} vs {rc:?}"
        ),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let Sliced { records, .. } = run_case(wc_case(), &EngineConfig::default(), &OutcomeCache::in_memory());
    let elapsed = started.elapsed();
    let (z, c) = (retained(&records, 0), retained(&records, 1));
    let deleted_zero = !z.contains(&3);
    let kept_canary = c.contains(&3);
    check(
        deleted_zero && kept_canary && elapsed < Duration::from_secs(10),
        format!(
            "`inword = 0` deleted under zero: {deleted_zero}; retained under canary:1: {kept_canary}; {elapsed:.2?}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let Sliced { records, .. } = run_case(ishappy_case(), &EngineConfig::default(), &OutcomeCache::in_memory());
    let (r, t) = (retained(&records, 0), retained(&records, 1));
    let deleted_residue = !r.contains(&5);
    let kept_typed = t.contains(&5);
    check(
        deleted_residue && kept_typed,
        format!("else-branch return deleted under residue: {deleted_residue}; retained under typed: {kept_typed}"),
    )
}

/// Re-captures the oracle from scratch, outside any session, and replays
/// every slice in every environment of its instantiation.
fn criterion_4(c: &Corpora) -> Outcome {
    let cfg = EngineConfig::default();
    let opts = ExecOptions::default();
    let (mut slices, mut violations) = (0, Vec::new());
    for s in c.fixtures.iter().chain(&c.random) {
        let envs = all_envs(&s.case.insts);
        let candidates: Vec<Candidate> = envs
            .iter()
            .map(|e| {
                let t = instrument(&s.case.program, &s.case.criterion, &e.tracker_template, &cfg.marker).unwrap();
                Candidate::new(render_instrumented(&s.case.program, &DeletionMask::new(), &t).unwrap())
            })
            .collect();
        let pairs: Vec<(&EnvironmentSpec, &Candidate)> = envs.iter().zip(&candidates).collect();
        let oracle = capture_oracle(&pairs, &s.case.suite, cfg.determinism_runs, cfg.exit_code_policy, &opts).unwrap();
        let v = Verifier { program: &s.case.program, suite: &s.case.suite, oracle: &oracle, cfg: &cfg };
        for (record, i) in s.records.iter().zip(&s.case.insts) {
            slices += 1;
            for x in v.soundness(record, i).unwrap() {
                violations.push(format!("{} {} {}#{}", s.case.name, i.id, x.env, x.test));
            }
        }
    }
    check(violations.is_empty(), format!("{slices} slices, {} violations {violations:?}", violations.len()))
}

fn criterion_5(c: &Corpora) -> Outcome {
    let cfg = EngineConfig::default();
    let (mut slices, mut found) = (0, Vec::new());
    for s in c.fixtures.iter().chain(&c.random) {
        let oracle = Session::prepare(
            &s.case.program,
            &s.case.criterion,
            &all_envs(&s.case.insts),
            &s.case.suite,
            &cfg,
            &OutcomeCache::disabled(),
            ExecOptions::default(),
        )
        .unwrap()
        .oracle()
        .clone();
        let v = Verifier { program: &s.case.program, suite: &s.case.suite, oracle: &oracle, cfg: &cfg };
        for (record, i) in s.records.iter().zip(&s.case.insts) {
            slices += 1;
            for w in v.deletable_windows(record, i).unwrap() {
                found.push(format!("{} {} {:?}", s.case.name, i.id, w.iter().map(|l| l.line).collect::<Vec<_>>()));
            }
        }
    }
    check(found.is_empty(), format!("{slices} slices, {} deletable windows {found:?}", found.len()))
}

/// Containment over the fig1 fixture and the random programs, all of
/// which are sliced under {residue} and {residue, canary:1}.
fn criterion_6(c: &Corpora) -> Outcome {
    let comparable = c.fixtures.iter().filter(|s| s.case.name == "fig1").chain(&c.random);
    let (mut total, mut exceptions) = (0, Vec::new());
    for s in comparable {
        total += 1;
        match classify(&s.records[0], &s.records[1]).unwrap() {
            ComparisonOutcome::Equal | ComparisonOutcome::ProperSubset => {}
            other => exceptions.push(format!("{} {other:?}", s.case.name)),
        }
    }
    let rate = exceptions.len() as f64 / total as f64;
    check(
        rate <= 0.10,
        format!("{} of {total} identities are exceptions ({:.1}%) {exceptions:?}", exceptions.len(), rate * 100.0),
    )
}

fn mirror(o: ComparisonOutcome) -> ComparisonOutcome {
    match o {
        ComparisonOutcome::ProperSuperset => ComparisonOutcome::ProperSubset,
        ComparisonOutcome::ProperSubset => ComparisonOutcome::ProperSuperset,
        other => other,
    }
}

fn criterion_7() -> Outcome {
    let count = comparison_count(7, 2921).unwrap();
    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    let sets = (prop::collection::btree_set(0u8..24, 0..12), prop::collection::btree_set(0u8..24, 0..12));
    let property = runner.run(&sets, |(a, b): (BTreeSet<u8>, BTreeSet<u8>)| {
        let o = classify_sets(&a, &b);
        // Partition: exactly one relation holds, and it is the right one.
        let (sub, sup) = (a.is_subset(&b), a.is_superset(&b));
        let expected = match (sub, sup) {
            (true, true) => ComparisonOutcome::Equal,
            (false, true) => ComparisonOutcome::ProperSuperset,
            (true, false) => ComparisonOutcome::ProperSubset,
            (false, false) => ComparisonOutcome::Incomparable,
        };
        prop_assert_eq!(o, expected);
        prop_assert_eq!(classify_sets(&b, &a), mirror(o));
        prop_assert_eq!(classify_sets(&a, &a), ComparisonOutcome::Equal);
        Ok(())
    });
    check(
        count == 61341 && property.is_ok(),
        format!(
            "comparison_count(7, 2921) = {count}; 1000 random pairs: {}",
            match property {
                Ok(()) => "partition and antisymmetry hold".to_string(),
                Err(e) => e.to_string(),
            }
        ),
    )
}

fn hand_record(program: &str, inst: &str, kept: &[usize], nondeterministic: bool) -> SliceRecord {
    let text = "a;\nb;\nc;\nd;\n";
    let p = Program::single(SourceUnit::from_text("p.toy", text));
    let mask: DeletionMask =
        (1..=4).filter(|l| !kept.contains(l)).map(|line| LineRef { path: "p.toy".into(), line }).collect();
    let stats = SliceStats { nondeterministic, fixpoint: true, ..SliceStats::default() };
    let mut r = SliceRecord::new(&p, inst, SlicingCriterion::new("p.toy", 2, "x"), &mask, stats);
    r.program = program.to_string();
    r
}

fn criterion_8() -> Outcome {
    let mut records = Vec::new();
    for i in ["G", "GC"] {
        records.push(hand_record("clean", i, &[1, 2, 4], false));
        // Flagged non-deterministic in one instantiation only.
        records.push(hand_record("flaky", i, &[2, 3], i == "GC"));
        // The criterion line itself was sliced away in one instantiation.
        records.push(hand_record("absent", i, if i == "G" { &[1, 3] } else { &[1, 2, 3] }, false));
    }
    let corpus = Corpus::from_records(records).unwrap();
    let (kept, removals) =
        apply_filters(&corpus, &[FilterKind::NonDeterministic, FilterKind::CriterionAbsent]).unwrap();
    let survivors: Vec<String> = kept.identities().into_iter().map(|i| i.program).collect();
    let reason =
        |p: &str| removals.iter().find(|r| r.identity.program == p).map(|r| (r.reasons.clone(), r.flagged_by.clone()));
    let ok = survivors == ["clean"]
        && kept.by_inst.values().all(|m| m.len() == 1)
        && removals.len() == 2
        && reason("flaky") == Some((vec![FilterKind::NonDeterministic], vec!["GC".into()]))
        && reason("absent") == Some((vec![FilterKind::CriterionAbsent], vec!["G".into()]));
    check(
        ok,
        format!(
            "survivors {survivors:?}; removals {:?}",
            removals.iter().map(|r| (&r.identity.program, &r.reasons, &r.flagged_by)).collect::<Vec<_>>()
        ),
    )
}

/// Every file under `root` except the run metadata, as (relative path, bytes).
fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = walkdir::WalkDir::new(root)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.path().strip_prefix(root).unwrap().to_path_buf())
        .filter(|p| !p.starts_with(RUN_DIR))
        .map(|p| {
            let bytes = std::fs::read(root.join(&p)).unwrap();
            (p, bytes)
        })
        .collect();
    files.sort();
    files
}

fn criterion_9(c: &Corpora) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let request = SliceRequest {
        root: fx.clone(),
        sources: vec![],
        context: vec![],
        criterion: SlicingCriterion::new("wc.toy", 6, "inword"),
        config_path: None,
        environments: vec![zero(), residue(), canary1()],
        instantiations: "toy-zero,toy-residue+toy-canary:1".into(),
        tests_dir: Some(fx.join("tests/wc")),
        engine: EngineConfig::default(),
        cache_dir: None,
        keep_failures: None,
        out: tmp.path().join("first"),
    };
    run_slice(&request).unwrap();
    let manifest = load_manifest(&tmp.path().join("first").join(RUN_DIR).join(MANIFEST_FILE)).unwrap();
    let mut replays = Vec::new();
    for (n, (jobs, cache_dir)) in
        [(1, None), (8, Some(tmp.path().join("cache"))), (8, Some(tmp.path().join("cache")))].into_iter().enumerate()
    {
        let mut m = manifest.clone();
        m.engine.jobs = jobs;
        m.cache_dir = cache_dir;
        let out = tmp.path().join(format!("replay{n}"));
        run_slice(&SliceRequest::from_manifest(&m, out.clone()).unwrap()).unwrap();
        replays.push(snapshot(&out));
    }
    let first = snapshot(&tmp.path().join("first"));
    let replay_identical = !first.is_empty() && replays.iter().all(|r| *r == first);

    // Cache on/off and jobs 1/8 over a slice of the corpus, both strategies.
    let mut differing = Vec::new();
    for s in c.fixtures.iter().chain(c.random.iter().take(20)) {
        let envs = all_envs(&s.case.insts);
        for strategy in [Strategy::GrowFirstSuccess, Strategy::LargestOfConcurrent] {
            let mut reference: Option<Vec<SliceRecord>> = None;
            for (jobs, cache) in [
                (1, OutcomeCache::in_memory()),
                (1, OutcomeCache::disabled()),
                (8, OutcomeCache::in_memory()),
                (8, OutcomeCache::disabled()),
            ] {
                let cfg = EngineConfig { jobs, strategy, ..EngineConfig::default() };
                let session = Session::prepare(
                    &s.case.program,
                    &s.case.criterion,
                    &envs,
                    &s.case.suite,
                    &cfg,
                    &cache,
                    ExecOptions::default(),
                )
                .unwrap();
                let records: Vec<SliceRecord> = s.case.insts.iter().map(|i| session.slice(i).unwrap()).collect();
                match &reference {
                    None => reference = Some(records),
                    Some(r) if *r != records => differing.push(format!("{} {strategy} jobs={jobs}", s.case.name)),
                    Some(_) => {}
                }
            }
            if strategy == Strategy::GrowFirstSuccess && reference.as_ref() != Some(&s.records) {
                differing.push(format!("{} differs from the corpus run", s.case.name));
            }
        }
    }
    check(
        replay_identical && differing.is_empty(),
        format!(
            "manifest replays byte-identical ({} files): {replay_identical}; cache/jobs variants differing: {differing:?}",
            first.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let corpus_started = Instant::now();
    let corpus = corpora();
    let corpus_time = corpus_started.elapsed();
    let criteria: Vec<Criterion> = vec![
        ("1 hidden dependence (fig1, y@14)", Box::new(criterion_1)),
        ("2 zero-initialized residue (wc)", Box::new(criterion_2)),
        ("3 typed runtime rejects missing return (ishappy)", Box::new(criterion_3)),
        ("4 soundness", Box::new(|| criterion_4(&corpus))),
        ("5 fixpoint minimality", Box::new(|| criterion_5(&corpus))),
        ("6 containment tendency", Box::new(|| criterion_6(&corpus))),
        ("7 comparison arithmetic", Box::new(criterion_7)),
        ("8 filter semantics", Box::new(criterion_8)),
        ("9 determinism and cache transparency", Box::new(|| criterion_9(&corpus))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    let total = started.elapsed();
    println!(
        "{} of {} criteria passed in {total:.1?} (shared corpus of {} slices: {corpus_time:.1?}); budget 2m: {}",
        criteria.len() - failed,
        criteria.len(),
        (corpus.fixtures.len() + corpus.random.len()) * 2,
        if total < Duration::from_secs(120) { "met" } else { "EXCEEDED" }
    );
    if failed > 0 || total >= Duration::from_secs(120) {
        std::process::exit(1);
    }
}
