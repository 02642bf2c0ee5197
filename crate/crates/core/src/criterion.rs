//! Slicing criteria and the tracker statement that observes them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::source::{join_lines, DeletionMask, Program, RenderedFile, SourceError};

/// Prefix that marks tracker output lines.
pub const DEFAULT_MARKER: &str = "ORBS:";

/// Tracker template for the built-in toy environments.
pub const TOY_TRACKER_TEMPLATE: &str = "print \"{marker}\", {var};";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CriterionError {
    #[error("criterion file {0} is not part of the program")]
    UnknownFile(String),
    #[error("criterion line {line} does not exist in {path}")]
    NoSuchLine { path: String, line: usize },
    #[error("tracker template must contain {{var}}: {0:?}")]
    TemplateWithoutVar(String),
    #[error("criterion must look like <path>:<line>:<var>, got {0:?}")]
    Syntax(String),
}

/// Slice with respect to `variable` just after `line` of `path`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlicingCriterion {
    pub path: String,
    pub line: usize,
    pub variable: String,
}

impl SlicingCriterion {
    pub fn new(path: impl Into<String>, line: usize, variable: impl Into<String>) -> Self {
        Self { path: path.into(), line, variable: variable.into() }
    }
}

impl fmt::Display for SlicingCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.path, self.line, self.variable)
    }
}

impl FromStr for SlicingCriterion {
    type Err = CriterionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CriterionError::Syntax(s.to_string());
        let mut parts = s.rsplitn(3, ':');
        let variable = parts.next().filter(|v| !v.is_empty()).ok_or_else(bad)?;
        let line = parts.next().and_then(|l| l.parse().ok()).filter(|&l| l > 0).ok_or_else(bad)?;
        let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?;
        Ok(Self::new(path, line, variable))
    }
}

/// The injected print statement. It lives outside the original numbering,
/// so no mask can ever select it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracker {
    pub path: String,
    pub after_line: usize,
    pub text: String,
}

/// Builds the tracker for `criterion` from an environment's template.
pub fn instrument(
    program: &Program,
    criterion: &SlicingCriterion,
    template: &str,
    marker: &str,
) -> Result<Tracker, CriterionError> {
    if !template.contains("{var}") {
        return Err(CriterionError::TemplateWithoutVar(template.to_string()));
    }
    let unit = program.unit(&criterion.path).ok_or_else(|| CriterionError::UnknownFile(criterion.path.clone()))?;
    if criterion.line == 0 || criterion.line > unit.len() {
        return Err(CriterionError::NoSuchLine { path: criterion.path.clone(), line: criterion.line });
    }
    Ok(Tracker {
        path: criterion.path.clone(),
        after_line: criterion.line,
        text: template.replace("{var}", &criterion.variable).replace("{marker}", marker),
    })
}

/// Renders the program under `mask` with the tracker in place. The tracker
/// stays put even when the criterion line itself has been deleted.
pub fn render_instrumented(
    program: &Program,
    mask: &DeletionMask,
    tracker: &Tracker,
) -> Result<Vec<RenderedFile>, SourceError> {
    let mut files = program.render(mask)?;
    for (file, unit) in files.iter_mut().zip(&program.units) {
        if unit.path != tracker.path {
            continue;
        }
        let mut kept: Vec<&str> = Vec::with_capacity(unit.len() + 1);
        for (n, line) in unit.lines() {
            if !mask.contains(&unit.path, n) {
                kept.push(line);
            }
            if n == tracker.after_line {
                kept.push(&tracker.text);
            }
        }
        file.text = join_lines(kept.into_iter(), unit.trailing_newline());
    }
    Ok(files)
}

/// Criterion values observed in one run, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrackedOutput {
    pub values: Vec<String>,
}

impl TrackedOutput {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        Self { values: values.into_iter().map(Into::into).collect() }
    }
}

/// Keeps the lines that start with `marker`, with the marker removed once.
pub fn extract_tracked(raw: &str, marker: &str) -> TrackedOutput {
    TrackedOutput {
        values: raw
            .split('\n')
            .filter_map(|l| l.strip_prefix(marker))
            .map(|v| v.strip_suffix('\r').unwrap_or(v).to_string())
            .collect(),
    }
}
