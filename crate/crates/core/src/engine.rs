//! The deletion loop: try windows of consecutive lines, keep a deletion when
//! every environment of the instantiation still reproduces the oracle, and
//! stop at a fixpoint.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheError, OutcomeCache};
use crate::criterion::{instrument, render_instrumented, CriterionError, SlicingCriterion, Tracker, DEFAULT_MARKER};
use crate::exec::{
    evaluate, probe_determinism, Candidate, Determinism, EnvironmentSpec, ExecOptions, ExecutionOutcome, OutcomeKind,
    TestSuite,
};
use crate::oracle::{capture_oracle, ExitCodePolicy, Oracle, OracleError, DEFAULT_DETERMINISM_RUNS};
use crate::source::{DeletionMask, LineRef, Program, SliceRecord, SliceStats, SourceError};

pub const DEFAULT_MAX_WINDOW: usize = 4;
pub const DEFAULT_MAX_PASSES: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("cannot resolve instantiation {0:?} against the configured environments")]
    UnknownInstantiation(String),
    #[error("invalid window {0}")]
    InvalidWindow(String),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sizes 1..=δ in order at each position; the first accepted size wins.
    #[default]
    GrowFirstSuccess,
    /// All sizes at each position are evaluated; the largest accepted wins.
    LargestOfConcurrent,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::GrowFirstSuccess => "grow",
            Strategy::LargestOfConcurrent => "largest",
        })
    }
}

impl FromStr for Strategy {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grow" | "grow_first_success" => Ok(Strategy::GrowFirstSuccess),
            "largest" | "largest_of_concurrent" => Ok(Strategy::LargestOfConcurrent),
            _ => Err(EngineError::Config(format!("unknown strategy {s:?} (expected grow or largest)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub max_window: usize,
    pub strategy: Strategy,
    pub max_passes: usize,
    pub exit_code_policy: ExitCodePolicy,
    /// Concurrent evaluations; 0 means one per available core.
    pub jobs: usize,
    pub determinism_runs: usize,
    pub marker: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_window: DEFAULT_MAX_WINDOW,
            strategy: Strategy::default(),
            max_passes: DEFAULT_MAX_PASSES,
            exit_code_policy: ExitCodePolicy::default(),
            jobs: 1,
            determinism_runs: DEFAULT_DETERMINISM_RUNS,
            marker: DEFAULT_MARKER.to_string(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.max_window == 0 {
            return bad("max_window must be at least 1");
        }
        if self.max_passes == 0 {
            return bad("max_passes must be at least 1");
        }
        if self.determinism_runs < 2 {
            return bad("determinism_runs must be at least 2");
        }
        if self.marker.is_empty() || self.marker.contains('\n') {
            return bad("the marker must be a non-empty single line");
        }
        Ok(())
    }
}

/// A non-empty subset of the configured environments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instantiation {
    pub id: String,
    pub envs: Vec<EnvironmentSpec>,
}

impl Instantiation {
    /// `envs` must already be in config order. Single-letter ids are
    /// concatenated (`GC`); longer ones are joined with `+`.
    pub fn new(envs: Vec<EnvironmentSpec>) -> Self {
        assert!(!envs.is_empty(), "an instantiation needs at least one environment");
        let id = if envs.iter().all(|e| e.id.chars().count() == 1) {
            envs.iter().map(|e| e.id.as_str()).collect()
        } else {
            envs.iter().map(|e| e.id.as_str()).collect::<Vec<_>>().join("+")
        };
        Self { id, envs }
    }

    pub fn single(env: EnvironmentSpec) -> Self {
        Self::new(vec![env])
    }
}

/// Resolves a comma-separated list of instantiation ids, or `all` for
/// every non-empty subset (smallest first).
pub fn resolve_instantiations(
    configured: &[EnvironmentSpec],
    request: &str,
) -> Result<Vec<Instantiation>, EngineError> {
    if request.trim() == "all" {
        let n = configured.len();
        if n > 16 {
            return Err(EngineError::Config(format!("`all` over {n} environments is too many subsets")));
        }
        let mut subsets: Vec<Vec<usize>> =
            (1..(1u32 << n)).map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        return Ok(subsets
            .into_iter()
            .map(|s| Instantiation::new(s.into_iter().map(|i| configured[i].clone()).collect()))
            .collect());
    }
    request.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|id| resolve_one(configured, id)).collect()
}

fn resolve_one(configured: &[EnvironmentSpec], id: &str) -> Result<Instantiation, EngineError> {
    let position = |name: &str| configured.iter().position(|e| e.id == name);
    let names: Vec<String> = if position(id).is_some() {
        vec![id.to_string()]
    } else if id.contains('+') {
        id.split('+').map(str::to_string).collect()
    } else {
        id.chars().map(String::from).collect()
    };
    let mut idx = names
        .iter()
        .map(|n| position(n).ok_or_else(|| EngineError::UnknownInstantiation(id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    idx.sort_unstable();
    idx.dedup();
    if idx.len() != names.len() {
        return Err(EngineError::UnknownInstantiation(id.to_string()));
    }
    Ok(Instantiation::new(idx.into_iter().map(|i| configured[i].clone()).collect()))
}

/// Why a candidate was turned down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reject {
    BuildFailed { env: String },
    Mismatch { env: String, test: usize },
    Crash { env: String, test: usize },
    Timeout { env: String, test: usize },
}

impl Reject {
    fn from_outcome(env: &str, test: usize, o: &ExecutionOutcome) -> Self {
        let env = env.to_string();
        match o.kind {
            OutcomeKind::BuildFailed => Reject::BuildFailed { env },
            OutcomeKind::RunCrashed => Reject::Crash { env, test },
            OutcomeKind::RunTimedOut => Reject::Timeout { env, test },
            OutcomeKind::Completed => Reject::Mismatch { env, test },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt {
    Accept(DeletionMask),
    Reject(Reject),
}

/// Everything fixed for one program and criterion: the instrumented
/// originals, their oracle, the shared cache and the worker pool.
pub struct Session<'a> {
    program: &'a Program,
    criterion: SlicingCriterion,
    suite: &'a TestSuite,
    cfg: EngineConfig,
    opts: ExecOptions,
    trackers: HashMap<String, Tracker>,
    oracle: Oracle,
    cache: &'a OutcomeCache,
    #[cfg(feature = "native")]
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Session<'a> {
    /// Instruments the program for every environment and captures the oracle.
    pub fn prepare(
        program: &'a Program,
        criterion: &SlicingCriterion,
        envs: &[EnvironmentSpec],
        suite: &'a TestSuite,
        cfg: &EngineConfig,
        cache: &'a OutcomeCache,
        opts: ExecOptions,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let mut trackers = HashMap::new();
        let mut originals = Vec::with_capacity(envs.len());
        for env in envs {
            let t = instrument(program, criterion, &env.tracker_template, &cfg.marker)?;
            originals.push((env, Candidate::new(render_instrumented(program, &DeletionMask::new(), &t)?)));
            trackers.insert(env.id.clone(), t);
        }
        let opts = ExecOptions { marker: cfg.marker.clone(), ..opts };
        let pairs: Vec<_> = originals.iter().map(|(e, c)| (*e, c)).collect();
        let oracle = capture_oracle(&pairs, suite, cfg.determinism_runs, cfg.exit_code_policy, &opts)?;
        Ok(Self {
            program,
            criterion: criterion.clone(),
            suite,
            cfg: cfg.clone(),
            opts,
            trackers,
            oracle,
            cache,
            #[cfg(feature = "native")]
            pool: build_pool(cfg.jobs),
        })
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn tracker(&self, env_id: &str) -> Option<&Tracker> {
        self.trackers.get(env_id)
    }

    /// Runs the fixpoint loop for one instantiation from an empty mask.
    pub fn slice(&self, inst: &Instantiation) -> Result<SliceRecord, EngineError> {
        for env in &inst.envs {
            if !self.trackers.contains_key(&env.id) {
                return Err(EngineError::UnknownEnv(env.id.clone()));
            }
        }
        let mut mask = DeletionMask::new();
        let mut stats = SliceStats::default();
        while stats.passes < self.cfg.max_passes {
            let (next, commits) = self.one_pass(mask, inst, &mut stats)?;
            mask = next;
            stats.passes += 1;
            log::debug!("{}: pass {} committed {commits} deletions", inst.id, stats.passes);
            if commits == 0 {
                stats.fixpoint = true;
                break;
            }
        }
        if !stats.fixpoint {
            log::warn!("{}: stopped after {} passes without reaching a fixpoint", inst.id, stats.passes);
        }
        stats.nondeterministic = self.probe_slice(inst, &mask)?;
        Ok(SliceRecord::new(self.program, inst.id.clone(), self.criterion.clone(), &mask, stats))
    }

    /// One top-to-bottom scan. Scanning resumes after a committed window.
    pub fn one_pass(
        &self,
        mut mask: DeletionMask,
        inst: &Instantiation,
        stats: &mut SliceStats,
    ) -> Result<(DeletionMask, usize), EngineError> {
        let mut commits = 0;
        let mut pos = 0;
        loop {
            let live = self.live_lines(&mask);
            if pos >= live.len() {
                break;
            }
            let windows: Vec<Vec<LineRef>> =
                (1..=self.cfg.max_window).map_while(|k| window_at(&live, pos, k).map(<[LineRef]>::to_vec)).collect();
            let accepted = match self.cfg.strategy {
                Strategy::GrowFirstSuccess => {
                    let mut hit = None;
                    for w in windows {
                        stats.candidates += 1;
                        if let Attempt::Accept(m) = self.attempt(&mask, &w, inst)? {
                            hit = Some(m);
                            break;
                        }
                    }
                    hit
                }
                Strategy::LargestOfConcurrent => {
                    stats.candidates += windows.len();
                    let results = self.par_map(windows, |w| self.attempt(&mask, &w, inst));
                    let mut hit = None;
                    for r in results {
                        if let Attempt::Accept(m) = r? {
                            hit = Some(m);
                        }
                    }
                    hit
                }
            };
            match accepted {
                // The lines after the window now sit at index `pos`.
                Some(m) => {
                    mask = m;
                    commits += 1;
                    stats.accepted += 1;
                }
                None => pos += 1,
            }
        }
        Ok((mask, commits))
    }

    /// Checks that `window` is a run of consecutive live lines and tries
    /// deleting it.
    pub fn attempt_window(
        &self,
        mask: &DeletionMask,
        window: &[LineRef],
        inst: &Instantiation,
    ) -> Result<Attempt, EngineError> {
        let live = self.live_lines(mask);
        let valid = !window.is_empty()
            && window.len() <= self.cfg.max_window
            && live
                .iter()
                .position(|l| *l == window[0])
                .and_then(|p| window_at(&live, p, window.len()))
                .is_some_and(|w| w == window);
        if !valid {
            let shown: Vec<String> = window.iter().map(ToString::to_string).collect();
            return Err(EngineError::InvalidWindow(shown.join(",")));
        }
        self.attempt(mask, window, inst)
    }

    fn attempt(&self, mask: &DeletionMask, window: &[LineRef], inst: &Instantiation) -> Result<Attempt, EngineError> {
        let candidate = mask.with(window.iter().cloned());
        Ok(match self.check(&candidate, inst)? {
            None => Attempt::Accept(candidate),
            Some(r) => Attempt::Reject(r),
        })
    }

    /// `None` when every environment matches the oracle on every test.
    /// Sequential checking stops at the first failing environment; parallel
    /// checking gathers all and reports the first in config order.
    pub fn check(&self, mask: &DeletionMask, inst: &Instantiation) -> Result<Option<Reject>, EngineError> {
        if self.jobs() <= 1 {
            for env in &inst.envs {
                if let Some(r) = self.check_env(env, mask)? {
                    return Ok(Some(r));
                }
            }
            return Ok(None);
        }
        let results = self.par_map(inst.envs.iter().collect(), |env| self.check_env(env, mask));
        for r in results {
            if let Some(rej) = r? {
                return Ok(Some(rej));
            }
        }
        Ok(None)
    }

    fn check_env(&self, env: &EnvironmentSpec, mask: &DeletionMask) -> Result<Option<Reject>, EngineError> {
        let outcomes = self.outcomes(env, mask)?;
        for (test, o) in outcomes.iter().enumerate() {
            if !self.oracle.matches(&env.id, test, o, self.cfg.exit_code_policy)? {
                return Ok(Some(Reject::from_outcome(&env.id, test, o)));
            }
        }
        Ok(None)
    }

    /// Outcomes of the instrumented program under `mask`, through the cache.
    pub fn outcomes(&self, env: &EnvironmentSpec, mask: &DeletionMask) -> Result<Vec<ExecutionOutcome>, EngineError> {
        let candidate = self.candidate(env, mask)?;
        Ok(self.cache.get_or_evaluate(env, &candidate.digest, self.suite.len(), || {
            evaluate(env, &candidate, self.suite, &self.opts)
        })?)
    }

    pub fn candidate(&self, env: &EnvironmentSpec, mask: &DeletionMask) -> Result<Candidate, EngineError> {
        let tracker = self.trackers.get(&env.id).ok_or_else(|| EngineError::UnknownEnv(env.id.clone()))?;
        Ok(Candidate::new(render_instrumented(self.program, mask, tracker)?))
    }

    fn probe_slice(&self, inst: &Instantiation, mask: &DeletionMask) -> Result<bool, EngineError> {
        for env in &inst.envs {
            let c = self.candidate(env, mask)?;
            if let Determinism::NonDeterministic(d) =
                probe_determinism(env, &c, self.suite, self.cfg.determinism_runs, &self.opts)
            {
                log::warn!("{}: finished slice is non-deterministic: {d}", inst.id);
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn live_lines(&self, mask: &DeletionMask) -> Vec<LineRef> {
        self.program.sliceable_lines().filter(|l| !mask.contains(&l.path, l.line)).collect()
    }

    fn jobs(&self) -> usize {
        #[cfg(feature = "native")]
        {
            self.pool.as_ref().map_or(1, |p| p.current_num_threads())
        }
        #[cfg(not(feature = "native"))]
        {
            1
        }
    }

    fn par_map<T: Send, R: Send>(&self, items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
        #[cfg(feature = "native")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().map(f).collect());
        }
        items.into_iter().map(f).collect()
    }
}

#[cfg(feature = "native")]
fn build_pool(jobs: usize) -> Option<rayon::ThreadPool> {
    let jobs = if jobs == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { jobs };
    if jobs <= 1 {
        return None;
    }
    // Deep toy recursion needs more than the default worker stack.
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .stack_size(16 << 20)
        .thread_name(|i| format!("orbs-worker-{i}"))
        .build()
        .map_err(|e| log::warn!("falling back to sequential evaluation: {e}"))
        .ok()
}

/// The `size` live lines starting at `pos`, if they exist and lie in one file.
pub fn window_at(live: &[LineRef], pos: usize, size: usize) -> Option<&[LineRef]> {
    let w = live.get(pos..pos + size)?;
    w.iter().all(|l| l.path == w[0].path).then_some(w)
}

/// Every window of 1..=`max_window` live lines under `mask`.
pub fn all_windows(program: &Program, mask: &DeletionMask, max_window: usize) -> Vec<Vec<LineRef>> {
    let live: Vec<LineRef> = program.sliceable_lines().filter(|l| !mask.contains(&l.path, l.line)).collect();
    let live = &live;
    (0..live.len())
        .flat_map(|p| (1..=max_window).filter_map(move |k| window_at(live, p, k).map(<[LineRef]>::to_vec)))
        .collect()
}

/// Slices one instantiation with a private cache.
pub fn slice(
    program: &Program,
    criterion: &SlicingCriterion,
    inst: &Instantiation,
    suite: &TestSuite,
    cfg: &EngineConfig,
) -> Result<SliceRecord, EngineError> {
    let cache = OutcomeCache::in_memory();
    Session::prepare(program, criterion, &inst.envs, suite, cfg, &cache, ExecOptions::default())?.slice(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{BuiltinEnv, CanarySeed};
    use crate::source::SourceUnit;

    fn toy(name: &str, text: &str) -> Program {
        Program::single(SourceUnit::from_text(name, text))
    }

    fn fig1() -> Program {
        toy("fig1.toy", include_str!("../fixtures/fig1.toy"))
    }

    fn env(b: BuiltinEnv) -> EnvironmentSpec {
        EnvironmentSpec::named_builtin(b)
    }

    fn retained(r: &SliceRecord) -> Vec<usize> {
        r.retained.values().next().unwrap().clone()
    }

    #[test]
    fn instantiation_ids() {
        let g = EnvironmentSpec::command("G", None, "true");
        let c = EnvironmentSpec::command("C", None, "true");
        let w = EnvironmentSpec::command("W", None, "true");
        let all = resolve_instantiations(&[g.clone(), c.clone(), w.clone()], "all").unwrap();
        let ids: Vec<&str> = all.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["G", "C", "W", "GC", "GW", "CW", "GCW"]);
        let got = resolve_instantiations(&[g.clone(), c.clone(), w.clone()], "CG, W").unwrap();
        assert_eq!(got[0].id, "GC");
        assert_eq!(got[1].id, "W");
        assert!(resolve_instantiations(&[g, c], "GX").is_err());

        let envs = [env(BuiltinEnv::Residue), env(BuiltinEnv::Canary(CanarySeed::Fixed(1)))];
        let got = resolve_instantiations(&envs, "toy-residue+toy-canary:1,toy-canary:1").unwrap();
        assert_eq!(got[0].id, "toy-residue+toy-canary:1");
        assert_eq!(got[1].envs, vec![envs[1].clone()]);
    }

    #[test]
    fn windows_stay_inside_one_file() {
        let p = Program::new(
            vec![SourceUnit::from_text("a", "1\n2\n"), SourceUnit::from_text("b", "3\n")],
            ["a".to_string(), "b".to_string()],
        );
        let w = all_windows(&p, &DeletionMask::new(), 4);
        assert_eq!(w.len(), 4);
        assert!(w.iter().all(|w| w.iter().all(|l| l.path == w[0].path)));
    }

    #[test]
    fn fig1_residue_plus_canary_keeps_line_8() {
        let inst = Instantiation::new(vec![env(BuiltinEnv::Residue), env(BuiltinEnv::Canary(CanarySeed::Fixed(1)))]);
        let r = slice(
            &fig1(),
            &SlicingCriterion::new("fig1.toy", 14, "y"),
            &inst,
            &TestSuite::single_empty(),
            &EngineConfig::default(),
        )
        .unwrap();
        assert!(r.retains("fig1.toy", 8));
        assert!(r.stats.fixpoint);
        assert!(r.check_partition(&fig1()));
    }

    #[test]
    fn fully_needed_program_is_untouched() {
        // Every line is needed to build or to produce the value.
        let p = toy("n.toy", "main() {\nint x;\nx = 5;\n}\n");
        let inst = Instantiation::single(env(BuiltinEnv::Zero));
        let r = slice(
            &p,
            &SlicingCriterion::new("n.toy", 3, "x"),
            &inst,
            &TestSuite::single_empty(),
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(retained(&r), vec![1, 2, 3, 4]);
        assert_eq!(r.stats.passes, 1);
        assert_eq!(r.stats.accepted, 0);
    }

    #[test]
    fn unused_declaration_is_deleted_under_zero() {
        let p = toy("u.toy", "main() {\nint unused;\nint x;\nx = 5;\n}\n");
        let inst = Instantiation::single(env(BuiltinEnv::Zero));
        let cache = OutcomeCache::in_memory();
        let suite = TestSuite::single_empty();
        let crit = SlicingCriterion::new("u.toy", 4, "x");
        let s =
            Session::prepare(&p, &crit, &inst.envs, &suite, &EngineConfig::default(), &cache, ExecOptions::default())
                .unwrap();
        let w = [LineRef { path: "u.toy".into(), line: 2 }];
        assert!(matches!(s.attempt_window(&DeletionMask::new(), &w, &inst).unwrap(), Attempt::Accept(_)));
        let w = [LineRef { path: "u.toy".into(), line: 4 }];
        assert_eq!(
            s.attempt_window(&DeletionMask::new(), &w, &inst).unwrap(),
            Attempt::Reject(Reject::Mismatch { env: "toy-zero".into(), test: 0 })
        );
        let w = [LineRef { path: "u.toy".into(), line: 1 }];
        assert_eq!(
            s.attempt_window(&DeletionMask::new(), &w, &inst).unwrap(),
            Attempt::Reject(Reject::BuildFailed { env: "toy-zero".into() })
        );
        let gap = [LineRef { path: "u.toy".into(), line: 2 }, LineRef { path: "u.toy".into(), line: 4 }];
        assert!(matches!(s.attempt_window(&DeletionMask::new(), &gap, &inst), Err(EngineError::InvalidWindow(_))));
    }

    #[test]
    fn grow_commits_a_block_only_deletable_as_a_whole() {
        // Lines 3-5 form an if-block: any strict part of it fails to parse.
        let p = toy("b.toy", "main() {\nint x;\nif (1) {\nprint \"\";\n}\nx = 2;\n}\n");
        let inst = Instantiation::single(env(BuiltinEnv::Zero));
        let cache = OutcomeCache::in_memory();
        let suite = TestSuite::single_empty();
        let crit = SlicingCriterion::new("b.toy", 6, "x");
        let cfg = EngineConfig::default();
        let s = Session::prepare(&p, &crit, &inst.envs, &suite, &cfg, &cache, ExecOptions::default()).unwrap();
        let mut stats = SliceStats::default();
        let (mask, commits) = s.one_pass(DeletionMask::new(), &inst, &mut stats).unwrap();
        assert_eq!(commits, 1);
        assert_eq!(mask.in_file("b.toy").collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn strategies_agree_on_fig1() {
        let crit = SlicingCriterion::new("fig1.toy", 14, "y");
        for b in [BuiltinEnv::Zero, BuiltinEnv::Residue, BuiltinEnv::Typed] {
            let inst = Instantiation::single(env(b));
            let grow = slice(&fig1(), &crit, &inst, &TestSuite::single_empty(), &EngineConfig::default()).unwrap();
            let cfg = EngineConfig { strategy: Strategy::LargestOfConcurrent, ..Default::default() };
            let largest = slice(&fig1(), &crit, &inst, &TestSuite::single_empty(), &cfg).unwrap();
            assert_eq!(grow.retained, largest.retained, "{b}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            EngineConfig { max_window: 0, ..Default::default() },
            EngineConfig { determinism_runs: 1, ..Default::default() },
            EngineConfig { marker: String::new(), ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert_eq!("largest".parse::<Strategy>().unwrap(), Strategy::LargestOfConcurrent);
        assert!("fast".parse::<Strategy>().is_err());
    }
}
