//! Seeded random toy programs for property and soundness testing.
//!
//! Programs have no loops, no division and no recursion, so every one of
//! them terminates without crashing under every memory model. Reads of
//! unassigned locals are common on purpose.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedProgram {
    pub text: String,
    /// A top-level assignment in `main`, always executed.
    pub criterion_line: usize,
    pub variable: String,
}

const MAIN_VARS: [&str; 4] = ["x", "y", "z", "w"];
const OPS: [&str; 3] = ["+", "-", "*"];

struct Gen {
    rng: ChaCha8Rng,
    lines: Vec<String>,
}

impl Gen {
    fn below(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }

    fn chance(&mut self, percent: usize) -> bool {
        self.below(100) < percent
    }

    fn pick<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items[self.below(items.len())]
    }

    fn atom(&mut self, vars: &[&str]) -> String {
        if self.chance(35) {
            self.below(10).to_string()
        } else {
            self.pick(vars).to_string()
        }
    }

    fn expr(&mut self, vars: &[&str]) -> String {
        let a = self.atom(vars);
        if self.chance(60) {
            let op = self.pick(&OPS);
            let b = self.atom(vars);
            format!("{a} {op} {b}")
        } else {
            a
        }
    }

    fn line(&mut self, indent: usize, text: String) {
        self.lines.push(format!("{}{text}", "  ".repeat(indent)));
    }

    fn helper(&mut self, name: &str) {
        let locals = ["a", "b"];
        let vars = ["p", "a", "b"];
        self.line(0, format!("int {name}(int p) {{"));
        self.line(1, "int a, b;".into());
        for _ in 0..1 + self.below(3) {
            let target = self.pick(&locals);
            if self.chance(40) {
                let (l, r) = (self.atom(&vars), self.atom(&vars));
                self.line(1, format!("if ({l} > {r})"));
                let e = self.expr(&vars);
                self.line(2, format!("{target} = {e};"));
                if self.chance(50) {
                    self.line(1, "else".into());
                    let e = self.expr(&vars);
                    self.line(2, format!("{target} = {e};"));
                }
            } else {
                let e = self.expr(&vars);
                self.line(1, format!("{target} = {e};"));
            }
        }
        let e = self.expr(&vars);
        self.line(1, format!("return {e};"));
        self.line(0, "}".into());
    }
}

/// Deterministic in `seed`.
pub fn generate(seed: u64) -> GeneratedProgram {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), lines: Vec::new() };
    let helpers: Vec<String> = (0..g.below(3)).map(|i| format!("h{i}")).collect();
    for h in &helpers {
        g.helper(h);
    }
    g.line(0, "main() {".into());
    g.line(1, format!("int {};", MAIN_VARS.join(", ")));
    g.line(1, "x = input();".into());
    let mut assignments = vec![(g.lines.len(), "x".to_string())];
    for _ in 0..3 + g.below(5) {
        let target = g.pick(&MAIN_VARS);
        match g.below(10) {
            0..=3 if !helpers.is_empty() => {
                let h = helpers[g.below(helpers.len())].clone();
                let arg = g.expr(&MAIN_VARS);
                g.line(1, format!("{target} = {h}({arg});"));
                assignments.push((g.lines.len(), target.to_string()));
            }
            4..=5 => {
                let (l, r) = (g.atom(&MAIN_VARS), g.atom(&MAIN_VARS));
                g.line(1, format!("if ({l} > {r})"));
                let e = g.expr(&MAIN_VARS);
                g.line(2, format!("{target} = {e};"));
            }
            6 => {
                let v = g.pick(&MAIN_VARS);
                g.line(1, format!("print \"trace \", {v};"));
            }
            _ => {
                let e = g.expr(&MAIN_VARS);
                g.line(1, format!("{target} = {e};"));
                assignments.push((g.lines.len(), target.to_string()));
            }
        }
    }
    g.line(0, "}".into());
    let (criterion_line, variable) = assignments[g.below(assignments.len())].clone();
    let mut text = g.lines.join("\n");
    text.push('\n');
    GeneratedProgram { text, criterion_line, variable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{run_source, MemoryModel, ToyStatus};

    #[test]
    fn generated_programs_run_everywhere() {
        for seed in 0..200 {
            let g = generate(seed);
            assert_eq!(g, generate(seed));
            let line = g.text.lines().nth(g.criterion_line - 1).unwrap();
            assert!(line.trim_start().starts_with(&format!("{} = ", g.variable)), "{line}");
            for model in [MemoryModel::Zero, MemoryModel::Residue, MemoryModel::Canary(1)] {
                for typed in [false, true] {
                    let run = run_source(&g.text, model, typed, "5")
                        .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", g.text));
                    assert_eq!(run.status, ToyStatus::Exited(0));
                }
            }
        }
    }
}
