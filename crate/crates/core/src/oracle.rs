//! The recorded behaviour of the instrumented original, per environment and
//! test, and the match decision for candidates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criterion::TrackedOutput;
use crate::digest::sha256_hex;
use crate::exec::{
    evaluate, probe_determinism, Candidate, Determinism, EnvironmentSpec, ExecOptions, ExecutionOutcome, OutcomeKind,
    TestSuite,
};

pub const DEFAULT_DETERMINISM_RUNS: usize = 3;
pub const ORACLE_FILE: &str = "oracle.json";

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("environment {env} is non-deterministic: {detail}")]
    NonDeterministic { env: String, detail: String },
    #[error("original program does not complete in environment {env} on test {test}: {kind:?}{}", diag_suffix(.diagnostic))]
    OriginalFailed { env: String, test: usize, kind: OutcomeKind, diagnostic: Option<String> },
    #[error("original program exits with code {code} in environment {env} on test {test}; pass --ignore-exit-code to slice it anyway")]
    OriginalExitCode { env: String, test: usize, code: i32 },
    #[error("no oracle entry for environment {env} test {test}")]
    UnknownKey { env: String, test: usize },
    #[error("unsupported digest algorithm {0:?}")]
    DigestAlg(String),
    #[error("duplicate oracle entry for environment {env} test {test}")]
    Duplicate { env: String, test: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed oracle file: {0}")]
    Json(#[from] serde_json::Error),
}

fn diag_suffix(d: &Option<String>) -> String {
    d.as_ref().map(|d| format!(" ({d})")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCodePolicy {
    /// A candidate must exit with status 0, like the original.
    #[default]
    Strict,
    /// Any normal exit is acceptable; only the tracked values count.
    Ignore,
}

/// Values joined by `\n`, then `\n#` and the comma-separated value lengths.
/// The trailer holds no newline, so it is found unambiguously and pins
/// down every boundary.
pub fn canonical_serialization(t: &TrackedOutput) -> String {
    let lengths: Vec<String> = t.values.iter().map(|v| v.len().to_string()).collect();
    format!("{}\n#{}", t.values.join("\n"), lengths.join(","))
}

pub fn tracked_digest(t: &TrackedOutput) -> String {
    sha256_hex(canonical_serialization(t).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    entries: BTreeMap<(String, usize), String>,
    runs: usize,
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    digest_alg: String,
    runs: usize,
    entries: Vec<OracleEntry>,
}

#[derive(Serialize, Deserialize)]
struct OracleEntry {
    env: String,
    test: usize,
    digest: String,
}

impl Oracle {
    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digest(&self, env: &str, test: usize) -> Option<&str> {
        self.entries.get(&(env.to_string(), test)).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, &str)> {
        self.entries.iter().map(|((e, t), d)| (e.as_str(), *t, d.as_str()))
    }

    pub fn matches(
        &self,
        env: &str,
        test: usize,
        outcome: &ExecutionOutcome,
        policy: ExitCodePolicy,
    ) -> Result<bool, OracleError> {
        let stored = self.digest(env, test).ok_or_else(|| OracleError::UnknownKey { env: env.to_string(), test })?;
        let Some(tracked) = outcome.tracked.as_ref().filter(|_| outcome.kind == OutcomeKind::Completed) else {
            return Ok(false);
        };
        if policy == ExitCodePolicy::Strict && outcome.exit_code != Some(0) {
            return Ok(false);
        }
        Ok(tracked_digest(tracked) == stored)
    }

    pub fn to_json(&self) -> String {
        let file = OracleFile {
            digest_alg: "sha256".into(),
            runs: self.runs,
            entries: self
                .entries
                .iter()
                .map(|((env, test), digest)| OracleEntry { env: env.clone(), test: *test, digest: digest.clone() })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("oracle serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let file: OracleFile = serde_json::from_str(text)?;
        if file.digest_alg != "sha256" {
            return Err(OracleError::DigestAlg(file.digest_alg));
        }
        let mut entries = BTreeMap::new();
        for e in file.entries {
            if entries.insert((e.env.clone(), e.test), e.digest).is_some() {
                return Err(OracleError::Duplicate { env: e.env, test: e.test });
            }
        }
        Ok(Self { entries, runs: file.runs })
    }

    pub fn save(&self, dir: &Path) -> Result<(), OracleError> {
        let path = dir.join(ORACLE_FILE);
        std::fs::write(&path, self.to_json())
            .map_err(|source| OracleError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| OracleError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

/// Probes each environment for determinism, then records one digest per
/// test. The original must complete everywhere.
pub fn capture_oracle(
    instrumented: &[(&EnvironmentSpec, &Candidate)],
    suite: &TestSuite,
    determinism_runs: usize,
    policy: ExitCodePolicy,
    opts: &ExecOptions,
) -> Result<Oracle, OracleError> {
    assert!(determinism_runs >= 2, "determinism_runs must be at least 2");
    let mut entries = BTreeMap::new();
    for &(env, candidate) in instrumented {
        if let Determinism::NonDeterministic(detail) = probe_determinism(env, candidate, suite, determinism_runs, opts)
        {
            return Err(OracleError::NonDeterministic { env: env.id.clone(), detail });
        }
        for (test, outcome) in evaluate(env, candidate, suite, opts).into_iter().enumerate() {
            let tracked = match (outcome.kind, outcome.tracked) {
                (OutcomeKind::Completed, Some(t)) => t,
                (kind, _) => {
                    return Err(OracleError::OriginalFailed {
                        env: env.id.clone(),
                        test,
                        kind,
                        diagnostic: outcome.diagnostic,
                    })
                }
            };
            if policy == ExitCodePolicy::Strict && outcome.exit_code != Some(0) {
                return Err(OracleError::OriginalExitCode {
                    env: env.id.clone(),
                    test,
                    code: outcome.exit_code.unwrap_or(-1),
                });
            }
            if tracked.values.is_empty() {
                log::warn!(
                    "environment {} test {test}: the criterion is never reached; every line may be deletable",
                    env.id
                );
            }
            entries.insert((env.id.clone(), test), tracked_digest(&tracked));
        }
    }
    Ok(Oracle { entries, runs: determinism_runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::{instrument, render_instrumented, SlicingCriterion, DEFAULT_MARKER};
    use crate::exec::{BuiltinEnv, CanarySeed};
    use crate::source::{DeletionMask, Program, SourceUnit};
    use proptest::prelude::*;

    // Pinned with Python: hashlib.sha256(b"\n#").hexdigest()
    const EMPTY_DIGEST: &str = "4236ea7a5e1a889a943969f708341ea1d174552310d60791af80d63a077ecf21";
    // hashlib.sha256(b"42\n#2").hexdigest()
    const DIGEST_42: &str = "aa87bea932389f4ae4c5a040ddfb38ca9c44a04feda2497135ecd33705614a69";

    fn fig1() -> Program {
        Program::single(SourceUnit::from_text("fig1.toy", include_str!("../fixtures/fig1.toy")))
    }

    fn instrumented(p: &Program, envs: &[EnvironmentSpec], c: &SlicingCriterion) -> Vec<(EnvironmentSpec, Candidate)> {
        envs.iter()
            .map(|e| {
                let t = instrument(p, c, &e.tracker_template, DEFAULT_MARKER).unwrap();
                (e.clone(), Candidate::new(render_instrumented(p, &DeletionMask::new(), &t).unwrap()))
            })
            .collect()
    }

    fn capture(p: &Program, envs: &[EnvironmentSpec], c: &SlicingCriterion) -> Result<Oracle, OracleError> {
        let inst = instrumented(p, envs, c);
        let pairs: Vec<_> = inst.iter().map(|(e, c)| (e, c)).collect();
        capture_oracle(&pairs, &TestSuite::single_empty(), 3, ExitCodePolicy::Strict, &ExecOptions::default())
    }

    #[test]
    fn pinned_digests() {
        assert_eq!(tracked_digest(&TrackedOutput::default()), EMPTY_DIGEST);
        assert_eq!(tracked_digest(&TrackedOutput::new(["42"])), DIGEST_42);
    }

    #[test]
    fn fig1_oracle_has_one_entry_per_env() {
        let envs = [BuiltinEnv::Zero, BuiltinEnv::Residue].map(EnvironmentSpec::named_builtin);
        let o = capture(&fig1(), &envs, &SlicingCriterion::new("fig1.toy", 14, "y")).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.digest("toy-zero", 0), Some(DIGEST_42));
        assert_eq!(o.digest("toy-residue", 0), Some(DIGEST_42));
    }

    #[test]
    fn per_run_canary_is_rejected() {
        let p = Program::single(SourceUnit::from_text("u.toy", "main() {\n  int u;\n  u = u + 1;\n}\n"));
        let envs = [EnvironmentSpec::named_builtin(BuiltinEnv::Canary(CanarySeed::PerRun))];
        let err = capture(&p, &envs, &SlicingCriterion::new("u.toy", 3, "u")).unwrap_err();
        assert!(matches!(&err, OracleError::NonDeterministic { env, .. } if env == "toy-canary:random"));
    }

    #[test]
    fn crashing_original_is_rejected() {
        let p = Program::single(SourceUnit::from_text("d.toy", "main() {\n  int z;\n  z = 1 / z;\n}\n"));
        let envs = [EnvironmentSpec::named_builtin(BuiltinEnv::Zero)];
        let err = capture(&p, &envs, &SlicingCriterion::new("d.toy", 2, "z")).unwrap_err();
        assert!(matches!(err, OracleError::OriginalFailed { kind: OutcomeKind::RunCrashed, .. }));
    }

    fn oracle_42() -> Oracle {
        Oracle { entries: [(("G".to_string(), 0), DIGEST_42.to_string())].into(), runs: 3 }
    }

    #[test]
    fn match_rules() {
        let o = oracle_42();
        let ok = ExecutionOutcome::completed(TrackedOutput::new(["42"]), 0);
        assert!(o.matches("G", 0, &ok, ExitCodePolicy::Strict).unwrap());
        let twice = ExecutionOutcome::completed(TrackedOutput::new(["42", "42"]), 0);
        assert!(!o.matches("G", 0, &twice, ExitCodePolicy::Strict).unwrap());
        let empty = ExecutionOutcome::completed(TrackedOutput::default(), 0);
        assert!(!o.matches("G", 0, &empty, ExitCodePolicy::Ignore).unwrap());
        let build = ExecutionOutcome::failed(OutcomeKind::BuildFailed, None, "x");
        assert!(!o.matches("G", 0, &build, ExitCodePolicy::Ignore).unwrap());
        let exit3 = ExecutionOutcome::completed(TrackedOutput::new(["42"]), 3);
        assert!(!o.matches("G", 0, &exit3, ExitCodePolicy::Strict).unwrap());
        assert!(o.matches("G", 0, &exit3, ExitCodePolicy::Ignore).unwrap());
        assert!(matches!(o.matches("G", 1, &ok, ExitCodePolicy::Strict), Err(OracleError::UnknownKey { .. })));
    }

    #[test]
    fn json_round_trip() {
        let o = oracle_42();
        let json = o.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["digest_alg"], "sha256");
        assert_eq!(v["runs"], 3);
        assert_eq!(v["entries"][0]["env"], "G");
        assert_eq!(v["entries"][0]["test"], 0);
        assert_eq!(v["entries"][0]["digest"], DIGEST_42);
        assert_eq!(Oracle::from_json(&json).unwrap(), o);
        assert!(Oracle::from_json(&json.replace("sha256", "md5")).is_err());
    }

    #[test]
    fn adjacent_values_do_not_collide() {
        let split = canonical_serialization(&TrackedOutput::new(["a", "b"]));
        let joined = canonical_serialization(&TrackedOutput::new(["a\nb"]));
        assert_ne!(split, joined);
        assert_ne!(
            canonical_serialization(&TrackedOutput::new([""])),
            canonical_serialization(&TrackedOutput::default())
        );
    }

    proptest! {
        #[test]
        fn serialization_is_injective(
            a in proptest::collection::vec("[a#,\n0-9]{0,4}", 0..5),
            b in proptest::collection::vec("[a#,\n0-9]{0,4}", 0..5),
        ) {
            let (ta, tb) = (TrackedOutput::new(a.clone()), TrackedOutput::new(b.clone()));
            prop_assert_eq!(a == b, canonical_serialization(&ta) == canonical_serialization(&tb));
        }
    }
}
