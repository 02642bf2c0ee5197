use orbslicer_demo::{compare_toy, run_toy, slice_toy};
use serde_json::Value;

const WC: &str = include_str!("../../core/fixtures/wc.toy");

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn zero_memory_hides_the_missing_initialization() {
    let v = json(compare_toy(WC, 6, "inword", "toy-zero", "toy-canary:1", "hello world\na  b c"));
    assert_eq!(v["relation"], "subset");
    let deleted = v["left"]["deleted"].as_array().unwrap();
    assert!(deleted.contains(&Value::from(3)));
    assert!(!v["right"]["deleted"].as_array().unwrap().contains(&Value::from(3)));
}

#[test]
fn sliced_text_still_runs() {
    let v = json(slice_toy(WC, 6, "inword", "toy-canary:1", "hello world"));
    let text = v["text"].as_str().unwrap();
    let run = json(run_toy(text, "toy-canary:1", "hello world"));
    assert_eq!(run["status"], "exited with 0");
}

#[test]
fn bad_criterion_is_reported_as_json() {
    let v = json(slice_toy(WC, 99, "inword", "toy-zero", ""));
    assert!(v["error"].as_str().unwrap().contains("99"), "{v}");
}
