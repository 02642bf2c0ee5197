//! A miniature imperative language with pluggable memory models.
//!
//! The language is just large enough to write small C-like programs one
//! statement per line: `int` locals, assignment, `if`/`else`, `while`,
//! functions, `return`, and `print`. What makes it useful for slicing is
//! the memory model. Locals live in a simulated stack region, and the
//! model decides what a freshly pushed frame contains:
//!
//! * [`MemoryModel::Zero`] clears every cell, like a runtime that
//!   initializes its memory.
//! * [`MemoryModel::Residue`] leaves whatever the previous frame at the
//!   same addresses wrote, like reused activation records.
//! * [`MemoryModel::Canary`] fills cells from a seeded generator.
//!
//! A program that reads a variable before writing it behaves differently
//! under each model, which is exactly the kind of environment sensitivity
//! a slicer validated in several environments has to cope with.

mod ast;
pub mod gen;
mod interp;
mod lexer;
mod parser;
mod resolve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ast::{BinaryOp, Expr, Function, PrintItem, ReturnType, Stmt, StmtKind, ToyProgram, UnaryOp};
pub use interp::{eval_toy, eval_toy_with, EvalLimits, ToyRun, ToyStatus, DIV_ZERO_EXIT, STACK_OVERFLOW_EXIT};
pub use parser::parse_toy;
pub use resolve::{compile, CompiledProgram};

/// What a newly pushed frame holds before the program writes to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryModel {
    Zero,
    Residue,
    Canary(u64),
}

impl fmt::Display for MemoryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryModel::Zero => f.write_str("zero"),
            MemoryModel::Residue => f.write_str("residue"),
            MemoryModel::Canary(seed) => write!(f, "canary:{seed}"),
        }
    }
}

impl FromStr for MemoryModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("toy-").unwrap_or(s);
        match s {
            "zero" => Ok(MemoryModel::Zero),
            "residue" => Ok(MemoryModel::Residue),
            _ => match s.strip_prefix("canary:") {
                Some(seed) => seed.parse().map(MemoryModel::Canary).map_err(|_| format!("bad canary seed '{seed}'")),
                None => Err(format!("unknown memory model '{s}'")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToyError {
    #[error("line {line}: syntax error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Resolve { line: usize, message: String },
    #[error("line {line}: type error: {message}")]
    Typed { line: usize, message: String },
}

impl ToyError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        ToyError::Parse { line, message: message.into() }
    }

    pub(crate) fn resolve(line: usize, message: impl Into<String>) -> Self {
        ToyError::Resolve { line, message: message.into() }
    }

    pub(crate) fn typed(line: usize, message: impl Into<String>) -> Self {
        ToyError::Typed { line, message: message.into() }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ToyError::Parse { line, .. } | ToyError::Resolve { line, .. } | ToyError::Typed { line, .. } => Some(*line),
        }
    }
}

/// Parse, resolve and run in one go.
pub fn run_source(text: &str, model: MemoryModel, typed: bool, input: &str) -> Result<ToyRun, ToyError> {
    let program = compile(&parse_toy(text)?, typed)?;
    Ok(eval_toy(&program, model, input))
}
