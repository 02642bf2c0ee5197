//! Browser bindings: run a toy program, slice it, and compare the slices
//! two instantiations produce. Every entry point takes and returns JSON
//! text so the page needs no generated type glue.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use orbslicer_core::cache::OutcomeCache;
use orbslicer_core::compare::{classify, ComparisonOutcome};
use orbslicer_core::criterion::SlicingCriterion;
use orbslicer_core::engine::{EngineConfig, Instantiation, Session};
use orbslicer_core::exec::{BuiltinEnv, CanarySeed, EnvironmentSpec, ExecOptions, TestSuite};
use orbslicer_core::source::{Program, SliceRecord, SourceUnit};
use orbslicer_core::toy::{run_source, ToyStatus};

const FILE: &str = "main.toy";

fn error(message: impl ToString) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn builtin(name: &str) -> Result<EnvironmentSpec, String> {
    let env: BuiltinEnv = name.trim().parse().map_err(|e: orbslicer_core::exec::ConfigError| e.to_string())?;
    if env == BuiltinEnv::Canary(CanarySeed::PerRun) {
        return Err("toy-canary:random cannot be sliced: it is non-deterministic by design".into());
    }
    Ok(EnvironmentSpec::named_builtin(env))
}

/// `toy-residue+toy-canary:1` becomes the two environments in that order.
fn instantiation(spec: &str) -> Result<Instantiation, String> {
    let envs = spec.split('+').map(builtin).collect::<Result<Vec<_>, _>>()?;
    if envs.is_empty() {
        return Err("empty instantiation".into());
    }
    Ok(Instantiation::new(envs))
}

fn suite(inputs: &str) -> TestSuite {
    let tests: Vec<&str> = inputs.split('\n').filter(|l| !l.trim().is_empty()).collect();
    if tests.is_empty() {
        TestSuite::single_empty()
    } else {
        TestSuite::stdin(tests)
    }
}

/// Runs `source` under `model`; returns `{stdout, status}`.
#[wasm_bindgen]
pub fn run_toy(source: &str, model: &str, input: &str) -> String {
    let env = match model.parse::<BuiltinEnv>() {
        Ok(e) => e,
        Err(e) => return error(e),
    };
    match run_source(source, env.model(), env.is_typed(), input) {
        Err(e) => error(e),
        Ok(run) => {
            let status = match run.status {
                ToyStatus::Exited(c) => format!("exited with {c}"),
                ToyStatus::Crashed { reason, exit_code } => format!("crashed ({reason}), exit {exit_code}"),
                ToyStatus::StepLimit => "step limit exceeded".to_string(),
            };
            json!({ "stdout": run.stdout, "status": status }).to_string()
        }
    }
}

#[derive(Serialize)]
struct SliceView {
    instantiation: String,
    retained: Vec<usize>,
    deleted: Vec<usize>,
    passes: usize,
    candidates: usize,
    text: String,
}

fn slice_all(
    source: &str,
    line: usize,
    variable: &str,
    specs: &[&str],
    inputs: &str,
) -> Result<Vec<(SliceRecord, SliceView)>, String> {
    let program = Program::single(SourceUnit::from_text(FILE, source));
    let criterion = SlicingCriterion::new(FILE, line, variable);
    let insts = specs.iter().map(|s| instantiation(s)).collect::<Result<Vec<_>, _>>()?;
    let mut envs: Vec<EnvironmentSpec> = Vec::new();
    for e in insts.iter().flat_map(|i| &i.envs) {
        if !envs.iter().any(|x| x.id == e.id) {
            envs.push(e.clone());
        }
    }
    let suite = suite(inputs);
    let cache = OutcomeCache::in_memory();
    let cfg = EngineConfig::default();
    let session = Session::prepare(&program, &criterion, &envs, &suite, &cfg, &cache, ExecOptions::default())
        .map_err(|e| e.to_string())?;
    insts
        .iter()
        .map(|inst| {
            let record = session.slice(inst).map_err(|e| e.to_string())?;
            let text = program.render(&record.mask()).map_err(|e| e.to_string())?.remove(0).text;
            let view = SliceView {
                instantiation: inst.id.clone(),
                retained: record.retained[FILE].clone(),
                deleted: record.deleted[FILE].clone(),
                passes: record.stats.passes,
                candidates: record.stats.candidates,
                text,
            };
            Ok((record, view))
        })
        .collect()
}

/// Slices `source` on `variable` after `line` under one instantiation.
/// `inputs` holds one test input per line.
#[wasm_bindgen]
pub fn slice_toy(source: &str, line: usize, variable: &str, instantiation: &str, inputs: &str) -> String {
    match slice_all(source, line, variable, &[instantiation], inputs) {
        Ok(mut v) => serde_json::to_string(&v.remove(0).1).expect("slice view serializes"),
        Err(e) => error(e),
    }
}

/// Slices under two instantiations and classifies the first slice
/// against the second: equal, superset, subset or incomparable.
#[wasm_bindgen]
pub fn compare_toy(source: &str, line: usize, variable: &str, left: &str, right: &str, inputs: &str) -> String {
    match slice_all(source, line, variable, &[left, right], inputs) {
        Err(e) => error(e),
        Ok(v) => {
            let relation = match classify(&v[0].0, &v[1].0) {
                Ok(ComparisonOutcome::Equal) => "equal",
                Ok(ComparisonOutcome::ProperSuperset) => "superset",
                Ok(ComparisonOutcome::ProperSubset) => "subset",
                Ok(ComparisonOutcome::Incomparable) => "incomparable",
                Err(e) => return error(e),
            };
            json!({ "relation": relation, "left": v[0].1, "right": v[1].1 }).to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const ISHAPPY: &str = include_str!("../../core/fixtures/ishappy.toy");

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn runs_programs() {
        let v = parse(run_toy("main() {\n print \"n=\", input();\n}\n", "toy-zero", "7"));
        assert_eq!(v["stdout"], "n=7\n");
        assert_eq!(v["status"], "exited with 0");
        assert!(parse(run_toy("main() {", "toy-zero", "")).get("error").is_some());
        assert!(parse(run_toy("main() {}", "toy-bogus", "")).get("error").is_some());
    }

    #[test]
    fn slices_ishappy() {
        let v = parse(slice_toy(ISHAPPY, 10, "h", "toy-residue", "3\n12"));
        assert_eq!(v["deleted"], json!([4, 5]));
        assert!(!v["text"].as_str().unwrap().contains("return 1;"));
        let v = parse(slice_toy(ISHAPPY, 10, "h", "toy-typed", "3\n12"));
        assert_eq!(v["deleted"], json!([4]));
    }

    #[test]
    fn compares_instantiations() {
        let v = parse(compare_toy(ISHAPPY, 10, "h", "toy-residue", "toy-residue+toy-typed", "3\n12"));
        assert_eq!(v["relation"], "subset");
        assert_eq!(v["right"]["instantiation"], "toy-residue+toy-typed");
        assert!(parse(compare_toy(ISHAPPY, 10, "h", "toy-canary:random", "toy-zero", "")).get("error").is_some());
    }
}
