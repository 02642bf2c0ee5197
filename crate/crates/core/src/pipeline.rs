//! End-to-end slicing runs: resolve inputs, capture the oracle, slice each
//! requested instantiation and write the results, plus a manifest that is
//! enough to replay the run.
//!
//! Output layout under `--out`:
//!
//! ```text
//! oracle.json
//! slice.json + sliced sources      (one instantiation)
//! <instantiation>/slice.json ...   (several instantiations)
//! run/manifest.json                (replay input; holds absolute paths and a timestamp)
//! run/timing.json                  (wall time and cache counters)
//! ```

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::cache::{CacheStats, OutcomeCache};
use crate::criterion::SlicingCriterion;
use crate::digest::sha256_hex;
use crate::engine::{resolve_instantiations, EngineConfig, EngineError, Instantiation, Session};
use crate::exec::{
    specs_from_entries, BuiltinEnv, ConfigError, EnvEntry, EnvironmentSpec, ExecOptions, TestInput, TestSuite,
};
use crate::source::{load_sources, write_slice_dir, Program, SliceRecord, SourceError};

pub const RUN_DIR: &str = "run";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl PipelineError {
    /// 2 when the original program could not be turned into an oracle, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Engine(EngineError::Oracle(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteDescription {
    /// Directory of `NN.input` files; absent means one empty-input test.
    pub dir: Option<PathBuf>,
    pub count: usize,
    /// SHA-256 of each payload, to detect changed inputs on replay.
    pub input_digests: Vec<String>,
}

/// Everything needed to repeat a slicing run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix: u64,
    pub config_path: Option<String>,
    /// Resolved environments, so replay does not depend on the config file.
    pub environments: Vec<EnvEntry>,
    pub root: PathBuf,
    pub sources: Vec<String>,
    pub context: Vec<String>,
    pub criterion: String,
    pub instantiations: Vec<String>,
    pub suite: SuiteDescription,
    pub engine: EngineConfig,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SliceRequest {
    pub root: PathBuf,
    /// Sliceable files, relative to `root`. Empty means the criterion's file.
    pub sources: Vec<String>,
    /// Files the build needs but that are never sliced.
    pub context: Vec<String>,
    pub criterion: SlicingCriterion,
    pub config_path: Option<PathBuf>,
    pub environments: Vec<EnvironmentSpec>,
    pub instantiations: String,
    pub tests_dir: Option<PathBuf>,
    pub engine: EngineConfig,
    pub cache_dir: Option<PathBuf>,
    pub keep_failures: Option<PathBuf>,
    pub out: PathBuf,
}

/// Environments named by builtin ids inside an instantiation request,
/// used when no config file is given.
pub fn builtin_envs_for(request: &str) -> Result<Vec<EnvironmentSpec>, PipelineError> {
    if request.trim() == "all" {
        return Err(PipelineError::Usage("--instantiation all needs --config".into()));
    }
    let mut envs: Vec<EnvironmentSpec> = Vec::new();
    for name in request.split(',').flat_map(|i| i.split('+')).map(str::trim).filter(|s| !s.is_empty()) {
        let b: BuiltinEnv = name.parse().map_err(|_| {
            PipelineError::Usage(format!("{name:?} is not a builtin environment; pass --config to define it"))
        })?;
        if !envs.iter().any(|e| e.id == name) {
            envs.push(EnvironmentSpec::named_builtin(b));
        }
    }
    if envs.is_empty() {
        return Err(PipelineError::Usage("no instantiation requested".into()));
    }
    Ok(envs)
}

#[derive(Debug)]
pub struct SliceReport {
    pub records: Vec<SliceRecord>,
    pub out_dirs: Vec<PathBuf>,
    pub manifest: RunManifest,
}

fn suite_digests(suite: &TestSuite) -> Vec<String> {
    suite
        .tests
        .iter()
        .map(|t| match t {
            TestInput::Args(s) | TestInput::Stdin(s) => sha256_hex(s.as_bytes()),
            TestInput::File(p) => sha256_hex(p.display().to_string().as_bytes()),
        })
        .collect()
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl SliceRequest {
    fn manifest(&self, instantiations: &[Instantiation], suite: &TestSuite) -> RunManifest {
        let absolute = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: now_unix(),
            config_path: self.config_path.as_ref().map(|p| absolute(p).display().to_string()),
            environments: self.environments.iter().map(EnvEntry::from).collect(),
            root: absolute(&self.root),
            sources: self.sources.clone(),
            context: self.context.clone(),
            criterion: self.criterion.to_string(),
            instantiations: instantiations.iter().map(|i| i.id.clone()).collect(),
            suite: SuiteDescription {
                dir: self.tests_dir.as_deref().map(absolute),
                count: suite.len(),
                input_digests: suite_digests(suite),
            },
            engine: self.engine.clone(),
            cache_dir: self.cache_dir.as_deref().map(absolute),
        }
    }

    /// Rebuilds a request from a manifest, writing to `out`.
    pub fn from_manifest(m: &RunManifest, out: PathBuf) -> Result<Self, PipelineError> {
        let environments = specs_from_entries(m.environments.clone())?;
        if let Ok(suite) = TestSuite::from_dir(m.suite.dir.as_deref()) {
            if suite_digests(&suite) != m.suite.input_digests {
                log::warn!("test inputs changed since the manifest was written; results may differ");
            }
        }
        Ok(Self {
            root: m.root.clone(),
            sources: m.sources.clone(),
            context: m.context.clone(),
            criterion: m
                .criterion
                .parse()
                .map_err(|e: crate::criterion::CriterionError| PipelineError::Usage(e.to_string()))?,
            config_path: m.config_path.as_ref().map(PathBuf::from),
            environments,
            instantiations: m.instantiations.join(","),
            tests_dir: m.suite.dir.clone(),
            engine: m.engine.clone(),
            cache_dir: m.cache_dir.clone(),
            keep_failures: None,
            out,
        })
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Manifest { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Serialize)]
struct Timing<'a> {
    instantiation: &'a str,
    wall_ms: u128,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    oracle_ms: u128,
    slices: Vec<Timing<'a>>,
    cache_hits: u64,
    cache_misses: u64,
}

pub fn run_slice(req: &SliceRequest) -> Result<SliceReport, PipelineError> {
    let instantiations = resolve_instantiations(&req.environments, &req.instantiations)?;
    if instantiations.is_empty() {
        return Err(PipelineError::Usage("no instantiation requested".into()));
    }
    let sources = if req.sources.is_empty() { vec![req.criterion.path.clone()] } else { req.sources.clone() };
    if !sources.contains(&req.criterion.path) {
        return Err(PipelineError::Usage(format!(
            "criterion file {} is not among the sliced sources",
            req.criterion.path
        )));
    }
    let mut all: Vec<String> = sources.clone();
    all.extend(req.context.iter().filter(|c| !sources.contains(c)).cloned());
    let program = Program::new(load_sources(&req.root, &all)?, sources.clone());
    let suite = TestSuite::from_dir(req.tests_dir.as_deref())
        .map_err(io_err(req.tests_dir.as_deref().unwrap_or(Path::new("."))))?;

    let manifest = req.manifest(&instantiations, &suite);
    let run_dir = req.out.join(RUN_DIR);
    std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

    // Only environments some instantiation uses need an oracle.
    let used: Vec<EnvironmentSpec> = req
        .environments
        .iter()
        .filter(|e| instantiations.iter().any(|i| i.envs.iter().any(|x| x.id == e.id)))
        .cloned()
        .collect();
    let cache = match &req.cache_dir {
        Some(dir) => OutcomeCache::persistent(dir),
        None => OutcomeCache::in_memory(),
    };
    let opts = ExecOptions { keep_failures: req.keep_failures.clone(), ..Default::default() };
    let started = Instant::now();
    let session = Session::prepare(&program, &req.criterion, &used, &suite, &req.engine, &cache, opts)?;
    let oracle_ms = started.elapsed().as_millis();
    session.oracle().save(&req.out).map_err(|e| PipelineError::Engine(e.into()))?;

    let mut records = Vec::new();
    let mut out_dirs = Vec::new();
    let mut timings = Vec::new();
    for inst in &instantiations {
        let started = Instant::now();
        let record = session.slice(inst)?;
        timings.push(started.elapsed().as_millis());
        let dir = if instantiations.len() == 1 { req.out.clone() } else { req.out.join(&inst.id) };
        write_slice_dir(&dir, &program, &record)?;
        log::info!(
            "{}: kept {} of {} lines in {} passes",
            inst.id,
            record.retained_count(),
            program.sliceable_lines().count(),
            record.stats.passes
        );
        records.push(record);
        out_dirs.push(dir);
    }

    let CacheStats { hits, misses } = cache.stats();
    let timing = TimingFile {
        oracle_ms,
        slices: instantiations
            .iter()
            .zip(&timings)
            .map(|(i, &wall_ms)| Timing { instantiation: &i.id, wall_ms })
            .collect(),
        cache_hits: hits,
        cache_misses: misses,
    };
    let timing_path = run_dir.join("timing.json");
    std::fs::write(&timing_path, serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n")
        .map_err(io_err(&timing_path))?;
    Ok(SliceReport { records, out_dirs, manifest })
}
