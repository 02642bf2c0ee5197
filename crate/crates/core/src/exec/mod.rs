//! Execution environments: build a rendered candidate, run it on every
//! test, and report what happened.
//!
//! Two kinds of environment exist. Built-in ones interpret toy programs
//! in-process under a chosen memory model. Command environments shell out
//! to a user-supplied build and run pipeline, for example a C compiler
//! followed by the produced binary.

#[cfg(feature = "native")]
mod process;

use std::collections::hash_map::RandomState;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::criterion::{extract_tracked, TrackedOutput, DEFAULT_MARKER, TOY_TRACKER_TEMPLATE};
use crate::digest::files_digest;
use crate::source::RenderedFile;
use crate::toy::{self, MemoryModel, ToyStatus};

#[cfg(feature = "native")]
pub use process::{run_shell, ProcessResult, ProcessStatus};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

/// Tracker template assumed for command environments that do not set one.
pub const C_TRACKER_TEMPLATE: &str = "printf(\"{marker}%d\\n\", {var});";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read environment config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("environment config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("environment {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate environment id {0:?}")]
    DuplicateId(String),
    #[error("unknown builtin environment {0:?}")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CanarySeed {
    Fixed(u64),
    /// A fresh seed for every run; deliberately non-deterministic.
    PerRun,
}

/// The in-process toy environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinEnv {
    Zero,
    Residue,
    Canary(CanarySeed),
    /// Zero-initialized memory plus a build-time check that every path
    /// through a non-void function returns a value.
    Typed,
}

impl BuiltinEnv {
    pub const NAMES: &'static [&'static str] =
        &["toy-zero", "toy-residue", "toy-canary:<seed>", "toy-canary:random", "toy-typed"];

    pub fn is_typed(self) -> bool {
        matches!(self, BuiltinEnv::Typed)
    }

    /// Memory model for one run; a per-run canary draws a fresh seed each call.
    pub fn model(self) -> MemoryModel {
        match self {
            BuiltinEnv::Zero | BuiltinEnv::Typed => MemoryModel::Zero,
            BuiltinEnv::Residue => MemoryModel::Residue,
            BuiltinEnv::Canary(CanarySeed::Fixed(seed)) => MemoryModel::Canary(seed),
            BuiltinEnv::Canary(CanarySeed::PerRun) => MemoryModel::Canary(fresh_seed()),
        }
    }
}

impl fmt::Display for BuiltinEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinEnv::Zero => f.write_str("toy-zero"),
            BuiltinEnv::Residue => f.write_str("toy-residue"),
            BuiltinEnv::Canary(CanarySeed::Fixed(s)) => write!(f, "toy-canary:{s}"),
            BuiltinEnv::Canary(CanarySeed::PerRun) => f.write_str("toy-canary:random"),
            BuiltinEnv::Typed => f.write_str("toy-typed"),
        }
    }
}

impl FromStr for BuiltinEnv {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy-zero" => Ok(BuiltinEnv::Zero),
            "toy-residue" => Ok(BuiltinEnv::Residue),
            "toy-typed" => Ok(BuiltinEnv::Typed),
            "toy-canary:random" => Ok(BuiltinEnv::Canary(CanarySeed::PerRun)),
            _ => s
                .strip_prefix("toy-canary:")
                .and_then(|seed| seed.parse().ok())
                .map(|seed| BuiltinEnv::Canary(CanarySeed::Fixed(seed)))
                .ok_or_else(|| ConfigError::UnknownBuiltin(s.to_string())),
        }
    }
}

fn fresh_seed() -> u64 {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let mut h = RandomState::new().build_hasher();
    h.write_u64(COUNTER.fetch_add(1, Ordering::Relaxed));
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvKind {
    Builtin(BuiltinEnv),
    Command { build_cmd: Option<String>, run_cmd: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentSpec {
    pub id: String,
    pub kind: EnvKind,
    pub timeout_ms: u64,
    pub env_vars: BTreeMap<String, String>,
    pub tracker_template: String,
}

impl EnvironmentSpec {
    pub fn builtin(id: impl Into<String>, env: BuiltinEnv) -> Self {
        Self {
            id: id.into(),
            kind: EnvKind::Builtin(env),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            env_vars: BTreeMap::new(),
            tracker_template: TOY_TRACKER_TEMPLATE.to_string(),
        }
    }

    /// A builtin whose id is its own name, e.g. `toy-residue`.
    pub fn named_builtin(env: BuiltinEnv) -> Self {
        Self::builtin(env.to_string(), env)
    }

    pub fn command(id: impl Into<String>, build_cmd: Option<&str>, run_cmd: &str) -> Self {
        Self {
            id: id.into(),
            kind: EnvKind::Command { build_cmd: build_cmd.map(str::to_string), run_cmd: run_cmd.to_string() },
            timeout_ms: DEFAULT_TIMEOUT_MS,
            env_vars: BTreeMap::new(),
            tracker_template: C_TRACKER_TEMPLATE.to_string(),
        }
    }

    /// Whether equal candidates are guaranteed to produce equal outcomes.
    /// Only the toy environments can promise this; command environments
    /// are as hermetic as the user's toolchain.
    pub fn is_hermetic(&self) -> bool {
        matches!(&self.kind, EnvKind::Builtin(b) if *b != BuiltinEnv::Canary(CanarySeed::PerRun))
    }

    /// Outcomes of a per-run canary are never reusable.
    pub fn is_cacheable(&self) -> bool {
        !matches!(self.kind, EnvKind::Builtin(BuiltinEnv::Canary(CanarySeed::PerRun)))
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            EnvKind::Builtin(b) => format!("builtin {b}"),
            EnvKind::Command { build_cmd: Some(b), run_cmd } => format!("build `{b}`, run `{run_cmd}`"),
            EnvKind::Command { build_cmd: None, run_cmd } => format!("run `{run_cmd}`"),
        }
    }
}

/// One object of the environment config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_cmd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_cmd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env_vars: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker_template: Option<String>,
}

impl TryFrom<EnvEntry> for EnvironmentSpec {
    type Error = ConfigError;

    fn try_from(e: EnvEntry) -> Result<Self, Self::Error> {
        let id =
            e.id.clone()
                .or_else(|| e.builtin.clone())
                .ok_or_else(|| ConfigError::Invalid { id: "?".into(), message: "missing \"id\"".into() })?;
        let invalid = |message: &str| ConfigError::Invalid { id: id.clone(), message: message.into() };
        if id.is_empty() || id.contains('+') || id.contains(',') {
            return Err(invalid("ids must be non-empty and must not contain '+' or ','"));
        }
        let mut spec = match (&e.builtin, &e.run_cmd) {
            (Some(name), None) => {
                if e.build_cmd.is_some() {
                    return Err(invalid("builtin environments take no build_cmd"));
                }
                EnvironmentSpec::builtin(&id, name.parse()?)
            }
            (None, Some(run)) => EnvironmentSpec::command(&id, e.build_cmd.as_deref(), run),
            (Some(_), Some(_)) => return Err(invalid("give either \"builtin\" or \"run_cmd\", not both")),
            (None, None) => return Err(invalid("needs \"builtin\" or \"run_cmd\"")),
        };
        if let Some(t) = e.timeout_ms {
            if t == 0 {
                return Err(invalid("timeout_ms must be positive"));
            }
            spec.timeout_ms = t;
        }
        if let Some(t) = e.tracker_template {
            if !t.contains("{var}") {
                return Err(invalid("tracker_template must contain {var}"));
            }
            spec.tracker_template = t;
        }
        spec.env_vars = e.env_vars;
        Ok(spec)
    }
}

impl From<&EnvironmentSpec> for EnvEntry {
    fn from(s: &EnvironmentSpec) -> Self {
        let (builtin, build_cmd, run_cmd) = match &s.kind {
            EnvKind::Builtin(b) => (Some(b.to_string()), None, None),
            EnvKind::Command { build_cmd, run_cmd } => (None, build_cmd.clone(), Some(run_cmd.clone())),
        };
        EnvEntry {
            id: Some(s.id.clone()),
            builtin,
            build_cmd,
            run_cmd,
            timeout_ms: Some(s.timeout_ms),
            env_vars: s.env_vars.clone(),
            tracker_template: Some(s.tracker_template.clone()),
        }
    }
}

pub fn parse_env_config(json: &str) -> Result<Vec<EnvironmentSpec>, ConfigError> {
    let entries: Vec<EnvEntry> = serde_json::from_str(json)?;
    specs_from_entries(entries)
}

pub fn specs_from_entries(entries: Vec<EnvEntry>) -> Result<Vec<EnvironmentSpec>, ConfigError> {
    let mut specs: Vec<EnvironmentSpec> = Vec::with_capacity(entries.len());
    for e in entries {
        let spec = EnvironmentSpec::try_from(e)?;
        if specs.iter().any(|s| s.id == spec.id) {
            return Err(ConfigError::DuplicateId(spec.id));
        }
        specs.push(spec);
    }
    Ok(specs)
}

pub fn load_env_config(path: &Path) -> Result<Vec<EnvironmentSpec>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_env_config(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    BuildFailed,
    RunCrashed,
    RunTimedOut,
    Completed,
}

/// Result of running one test. `tracked` is present exactly when the run
/// completed (exited normally, whatever the exit code).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracked: Option<TrackedOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ExecutionOutcome {
    pub fn completed(tracked: TrackedOutput, exit_code: i32) -> Self {
        Self { kind: OutcomeKind::Completed, tracked: Some(tracked), exit_code: Some(exit_code), diagnostic: None }
    }

    pub fn failed(kind: OutcomeKind, exit_code: Option<i32>, diagnostic: impl Into<String>) -> Self {
        debug_assert!(kind != OutcomeKind::Completed);
        Self { kind, tracked: None, exit_code, diagnostic: Some(diagnostic.into()) }
    }

    /// The part of an outcome that decides a match; diagnostics may mention
    /// scratch paths and are ignored.
    pub fn same_behavior(&self, other: &Self) -> bool {
        self.kind == other.kind && self.tracked == other.tracked && self.exit_code == other.exit_code
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestInput {
    /// Passed as `{test_input}` verbatim; toy environments read it as input.
    Args(String),
    /// Piped to standard input, and also written to the `{test_input}` file.
    Stdin(String),
    /// An existing file, named by `{test_input}` and read by toy environments.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub tests: Vec<TestInput>,
}

impl TestSuite {
    pub fn new(tests: Vec<TestInput>) -> Self {
        assert!(!tests.is_empty(), "a test suite needs at least one test");
        Self { tests }
    }

    /// A single test with empty input.
    pub fn single_empty() -> Self {
        Self::new(vec![TestInput::Stdin(String::new())])
    }

    pub fn stdin<S: Into<String>>(payloads: impl IntoIterator<Item = S>) -> Self {
        Self::new(payloads.into_iter().map(|p| TestInput::Stdin(p.into())).collect())
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// Loads `NN.input` files from `dir` in name order, one stdin payload
    /// each. Without a directory the suite is one empty-input test.
    pub fn from_dir(dir: Option<&Path>) -> std::io::Result<Self> {
        let Some(dir) = dir else { return Ok(Self::single_empty()) };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "input"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no *.input files in {}", dir.display()),
            ));
        }
        let tests = files.iter().map(|p| std::fs::read_to_string(p).map(TestInput::Stdin)).collect::<Result<_, _>>()?;
        Ok(Self::new(tests))
    }
}

/// A rendered program variant plus its content digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub files: Vec<RenderedFile>,
    pub digest: String,
}

impl Candidate {
    pub fn new(files: Vec<RenderedFile>) -> Self {
        let digest = files_digest(files.iter().map(|f| (f.path.as_str(), f.text.as_str())));
        Self { files, digest }
    }

    fn toy_source(&self) -> String {
        let mut text = String::new();
        for f in &self.files {
            text.push_str(&f.text);
            if !f.text.is_empty() && !f.text.ends_with('\n') {
                text.push('\n');
            }
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOptions {
    pub marker: String,
    /// Where to keep scratch directories of candidates that did not complete
    /// cleanly. `None` deletes them.
    pub keep_failures: Option<PathBuf>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { marker: DEFAULT_MARKER.to_string(), keep_failures: None }
    }
}

/// Builds `candidate` once and runs it on every test of `suite`.
pub fn evaluate(
    env: &EnvironmentSpec,
    candidate: &Candidate,
    suite: &TestSuite,
    opts: &ExecOptions,
) -> Vec<ExecutionOutcome> {
    match &env.kind {
        EnvKind::Builtin(b) => evaluate_builtin(*b, candidate, suite, opts),
        EnvKind::Command { build_cmd, run_cmd } => {
            evaluate_command(env, build_cmd.as_deref(), run_cmd, candidate, suite, opts)
        }
    }
}

fn evaluate_builtin(
    env: BuiltinEnv,
    candidate: &Candidate,
    suite: &TestSuite,
    opts: &ExecOptions,
) -> Vec<ExecutionOutcome> {
    let program = match toy::parse_toy(&candidate.toy_source()).and_then(|p| toy::compile(&p, env.is_typed())) {
        Ok(p) => p,
        Err(e) => {
            let out = ExecutionOutcome::failed(OutcomeKind::BuildFailed, None, e.to_string());
            return vec![out; suite.len()];
        }
    };
    suite
        .tests
        .iter()
        .map(|test| {
            let input = match test {
                TestInput::Args(s) | TestInput::Stdin(s) => s.clone(),
                TestInput::File(p) => match std::fs::read_to_string(p) {
                    Ok(s) => s,
                    Err(e) => {
                        return ExecutionOutcome::failed(
                            OutcomeKind::RunCrashed,
                            None,
                            format!("cannot read test input {}: {e}", p.display()),
                        )
                    }
                },
            };
            let run = toy::eval_toy(&program, env.model(), &input);
            match run.status {
                ToyStatus::Exited(code) => {
                    ExecutionOutcome::completed(extract_tracked(&run.stdout, &opts.marker), code)
                }
                ToyStatus::Crashed { reason, exit_code } => {
                    ExecutionOutcome::failed(OutcomeKind::RunCrashed, Some(exit_code), reason)
                }
                ToyStatus::StepLimit => {
                    ExecutionOutcome::failed(OutcomeKind::RunTimedOut, None, "step budget exhausted")
                }
            }
        })
        .collect()
}

#[cfg(not(feature = "native"))]
fn evaluate_command(
    _env: &EnvironmentSpec,
    _build_cmd: Option<&str>,
    _run_cmd: &str,
    _candidate: &Candidate,
    suite: &TestSuite,
    _opts: &ExecOptions,
) -> Vec<ExecutionOutcome> {
    let out =
        ExecutionOutcome::failed(OutcomeKind::RunCrashed, None, "command environments are not available in this build");
    vec![out; suite.len()]
}

#[cfg(feature = "native")]
fn evaluate_command(
    env: &EnvironmentSpec,
    build_cmd: Option<&str>,
    run_cmd: &str,
    candidate: &Candidate,
    suite: &TestSuite,
    opts: &ExecOptions,
) -> Vec<ExecutionOutcome> {
    use std::time::Duration;

    let timeout = Duration::from_millis(env.timeout_ms);
    let scratch = match tempfile::Builder::new().prefix("orbs-").tempdir() {
        Ok(d) => d,
        Err(e) => {
            let out = ExecutionOutcome::failed(OutcomeKind::RunCrashed, None, format!("no scratch dir: {e}"));
            return vec![out; suite.len()];
        }
    };
    let root = scratch.path();
    let src_dir = root.join("src");
    let out_path = root.join("candidate.out");
    let subst = |cmd: &str, test_input: &str| {
        cmd.replace("{src_dir}", &src_dir.to_string_lossy())
            .replace("{out}", &out_path.to_string_lossy())
            .replace("{test_input}", test_input)
    };

    let mut outcomes = Vec::with_capacity(suite.len());
    let written = candidate.files.iter().try_for_each(|f| {
        let target = src_dir.join(&f.path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(target, &f.text)
    });
    if let Err(e) = written {
        let out = ExecutionOutcome::failed(OutcomeKind::RunCrashed, None, format!("cannot write candidate: {e}"));
        return vec![out; suite.len()];
    }

    let built = match build_cmd {
        None => Ok(()),
        Some(cmd) => {
            let r = run_shell(&subst(cmd, ""), root, &env.env_vars, None, timeout);
            match r.status {
                ProcessStatus::Exited(0) => Ok(()),
                other => Err(format!("{other:?}: {}", String::from_utf8_lossy(&r.stderr).trim_end())),
            }
        }
    };

    match built {
        Err(msg) => outcomes.extend(
            std::iter::repeat_with(|| ExecutionOutcome::failed(OutcomeKind::BuildFailed, None, msg.clone()))
                .take(suite.len()),
        ),
        Ok(()) => {
            for (i, test) in suite.tests.iter().enumerate() {
                let (arg, stdin): (String, Option<&[u8]>) = match test {
                    TestInput::Args(a) => (a.clone(), None),
                    TestInput::Stdin(payload) => {
                        let p = root.join(format!("test_{i}.input"));
                        if let Err(e) = std::fs::write(&p, payload) {
                            outcomes.push(ExecutionOutcome::failed(OutcomeKind::RunCrashed, None, e.to_string()));
                            continue;
                        }
                        (p.to_string_lossy().into_owned(), Some(payload.as_bytes()))
                    }
                    TestInput::File(p) => (p.to_string_lossy().into_owned(), None),
                };
                let r = run_shell(&subst(run_cmd, &arg), root, &env.env_vars, stdin, timeout);
                let stdout = String::from_utf8_lossy(&r.stdout);
                outcomes.push(match r.status {
                    // Shells report a child killed by signal N as exit status 128+N.
                    ProcessStatus::Exited(code) if (129..=192).contains(&code) => ExecutionOutcome::failed(
                        OutcomeKind::RunCrashed,
                        Some(code),
                        format!("terminated by signal {}", code - 128),
                    ),
                    ProcessStatus::Exited(code) => {
                        ExecutionOutcome::completed(extract_tracked(&stdout, &opts.marker), code)
                    }
                    ProcessStatus::Signaled(sig) => ExecutionOutcome::failed(
                        OutcomeKind::RunCrashed,
                        Some(128 + sig),
                        format!("terminated by signal {sig}"),
                    ),
                    ProcessStatus::TimedOut => ExecutionOutcome::failed(
                        OutcomeKind::RunTimedOut,
                        None,
                        format!("exceeded {} ms", env.timeout_ms),
                    ),
                    ProcessStatus::SpawnFailed(e) => ExecutionOutcome::failed(OutcomeKind::RunCrashed, None, e),
                });
            }
        }
    }

    let clean = outcomes.iter().all(|o| o.kind == OutcomeKind::Completed && o.exit_code == Some(0));
    if let (false, Some(keep)) = (clean, &opts.keep_failures) {
        let dest = keep.join(format!("{}-{}", env.id, &candidate.digest[..16]));
        let kept = scratch.keep();
        if std::fs::create_dir_all(keep).is_err() || std::fs::rename(&kept, &dest).is_err() {
            log::warn!("kept failing candidate at {}", kept.display());
        }
    }
    outcomes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Determinism {
    Deterministic,
    NonDeterministic(String),
}

/// Runs the whole suite `runs` times and compares outcome kinds, exit codes
/// and tracked values per test. Stable failures count as deterministic.
pub fn probe_determinism(
    env: &EnvironmentSpec,
    candidate: &Candidate,
    suite: &TestSuite,
    runs: usize,
    opts: &ExecOptions,
) -> Determinism {
    assert!(runs >= 2, "a determinism probe needs at least two runs");
    let first = evaluate(env, candidate, suite, opts);
    for run in 1..runs {
        let again = evaluate(env, candidate, suite, opts);
        for (test, (a, b)) in first.iter().zip(&again).enumerate() {
            if !a.same_behavior(b) {
                return Determinism::NonDeterministic(format!(
                    "environment {} test {test}: run 0 gave {:?} {:?}, run {run} gave {:?} {:?}",
                    env.id, a.kind, a.tracked, b.kind, b.tracked
                ));
            }
        }
    }
    Determinism::Deterministic
}
