//! Memoized execution outcomes keyed by environment, candidate digest and
//! test index, optionally persisted as one JSON file per key.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex, MutexGuard};

use crate::exec::{EnvironmentSpec, ExecutionOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub env_id: String,
    pub candidate_digest: String,
    pub test_index: usize,
}

impl CacheKey {
    pub fn new(env_id: &str, candidate_digest: &str, test_index: usize) -> Self {
        Self { env_id: env_id.to_string(), candidate_digest: candidate_digest.to_string(), test_index }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(
        "cache integrity violation in hermetic environment {env}: candidate {digest} test {test} produced two \
         different outcomes"
    )]
    Integrity { env: String, digest: String, test: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Default)]
struct State {
    map: HashMap<CacheKey, ExecutionOutcome>,
    inflight: HashSet<(String, String)>,
    /// Environments that showed non-hermetic behaviour; never cached again.
    poisoned: HashSet<String>,
    stats: BTreeMap<String, CacheStats>,
}

pub struct OutcomeCache {
    enabled: bool,
    disk: Option<PathBuf>,
    state: Mutex<State>,
    ready: Condvar,
}

impl Default for OutcomeCache {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl OutcomeCache {
    pub fn in_memory() -> Self {
        Self { enabled: true, disk: None, state: Mutex::default(), ready: Condvar::new() }
    }

    /// A cache that never hits; every request evaluates.
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::in_memory() }
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Self {
        Self { disk: Some(dir.into()), ..Self::in_memory() }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn lookup(&self, key: &CacheKey) -> Option<ExecutionOutcome> {
        if !self.enabled {
            return None;
        }
        let mut st = self.lock();
        if st.poisoned.contains(&key.env_id) {
            return None;
        }
        if let Some(o) = st.map.get(key) {
            return Some(o.clone());
        }
        let o = self.read_disk(key)?;
        st.map.insert(key.clone(), o.clone());
        Some(o)
    }

    /// Records `outcome`. A different outcome already stored under the same
    /// key is an error for hermetic environments; for others it logs a
    /// warning and stops caching that environment.
    pub fn store(&self, key: CacheKey, outcome: ExecutionOutcome, hermetic: bool) -> Result<(), CacheError> {
        if !self.enabled {
            return Ok(());
        }
        let mut st = self.lock();
        self.store_locked(&mut st, key, outcome, hermetic)
    }

    fn store_locked(
        &self,
        st: &mut State,
        key: CacheKey,
        outcome: ExecutionOutcome,
        hermetic: bool,
    ) -> Result<(), CacheError> {
        if st.poisoned.contains(&key.env_id) {
            return Ok(());
        }
        let previous = st.map.get(&key).cloned().or_else(|| self.read_disk(&key));
        match previous {
            Some(prev) if prev.same_behavior(&outcome) => {
                st.map.insert(key, prev);
                Ok(())
            }
            Some(_) if hermetic => {
                Err(CacheError::Integrity { env: key.env_id, digest: key.candidate_digest, test: key.test_index })
            }
            Some(_) => {
                log::warn!(
                    "environment {} gave different outcomes for the same candidate; disabling its cache",
                    key.env_id
                );
                st.map.retain(|k, _| k.env_id != key.env_id);
                if let Some(dir) = &self.disk {
                    let _ = std::fs::remove_dir_all(dir.join(dir_name(&key.env_id)));
                }
                st.poisoned.insert(key.env_id);
                Ok(())
            }
            None => {
                self.write_disk(&key, &outcome);
                st.map.insert(key, outcome);
                Ok(())
            }
        }
    }

    /// Returns the outcomes of `digest` in `env` for tests `0..tests`,
    /// calling `eval` on a miss. Concurrent requests for the same candidate
    /// wait for the first one instead of evaluating again.
    pub fn get_or_evaluate(
        &self,
        env: &EnvironmentSpec,
        digest: &str,
        tests: usize,
        eval: impl FnOnce() -> Vec<ExecutionOutcome>,
    ) -> Result<Vec<ExecutionOutcome>, CacheError> {
        let cacheable = self.enabled && env.is_cacheable();
        let flight = (env.id.clone(), digest.to_string());
        let keys: Vec<CacheKey> = (0..tests).map(|t| CacheKey::new(&env.id, digest, t)).collect();
        if cacheable {
            let mut st = self.lock();
            loop {
                if st.poisoned.contains(&env.id) {
                    break;
                }
                if let Some(found) = self.collect(&mut st, &keys) {
                    st.stats.entry(env.id.clone()).or_default().hits += 1;
                    return Ok(found);
                }
                if st.inflight.insert(flight.clone()) {
                    break;
                }
                st = self.ready.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        }

        // Clears the in-flight marker even if `eval` panics.
        struct Landing<'a> {
            cache: &'a OutcomeCache,
            flight: Option<(String, String)>,
        }
        impl Drop for Landing<'_> {
            fn drop(&mut self) {
                if let Some(f) = self.flight.take() {
                    self.cache.lock().inflight.remove(&f);
                    self.cache.ready.notify_all();
                }
            }
        }
        let _landing = Landing { cache: self, flight: cacheable.then_some(flight) };

        let outcomes = eval();
        assert_eq!(outcomes.len(), tests, "evaluation returned the wrong number of outcomes");
        let mut st = self.lock();
        st.stats.entry(env.id.clone()).or_default().misses += 1;
        if cacheable {
            for (key, o) in keys.into_iter().zip(&outcomes) {
                self.store_locked(&mut st, key, o.clone(), env.is_hermetic())?;
            }
        }
        Ok(outcomes)
    }

    fn collect(&self, st: &mut State, keys: &[CacheKey]) -> Option<Vec<ExecutionOutcome>> {
        let mut out = Vec::with_capacity(keys.len());
        for k in keys {
            let o = match st.map.get(k) {
                Some(o) => o.clone(),
                None => {
                    let o = self.read_disk(k)?;
                    st.map.insert(k.clone(), o.clone());
                    o
                }
            };
            out.push(o);
        }
        Some(out)
    }

    pub fn stats(&self) -> CacheStats {
        self.lock()
            .stats
            .values()
            .fold(CacheStats::default(), |acc, s| CacheStats { hits: acc.hits + s.hits, misses: acc.misses + s.misses })
    }

    /// Hits and misses counted per candidate (not per test) for one environment.
    pub fn stats_for(&self, env_id: &str) -> CacheStats {
        self.lock().stats.get(env_id).copied().unwrap_or_default()
    }

    pub fn is_poisoned(&self, env_id: &str) -> bool {
        self.lock().poisoned.contains(env_id)
    }

    fn path_of(&self, key: &CacheKey) -> Option<PathBuf> {
        let dir = self.disk.as_ref()?;
        Some(dir.join(dir_name(&key.env_id)).join(&key.candidate_digest).join(format!("{}.json", key.test_index)))
    }

    fn read_disk(&self, key: &CacheKey) -> Option<ExecutionOutcome> {
        let path = self.path_of(key)?;
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(o) => Some(o),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn write_disk(&self, key: &CacheKey, outcome: &ExecutionOutcome) {
        let Some(path) = self.path_of(key) else { return };
        if let Err(e) = write_atomically(&path, &serde_json::to_string(outcome).expect("outcome serializes")) {
            log::warn!("cannot persist cache entry {}: {e}", path.display());
        }
    }
}

/// Environment ids become directory names; path separators are replaced.
fn dir_name(env_id: &str) -> String {
    env_id.chars().map(|c| if c == '/' || c == '\\' || c == '\0' { '_' } else { c }).collect()
}

fn write_atomically(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().expect("cache paths have a parent");
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.{}.tmp", path.file_name().unwrap().to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}
