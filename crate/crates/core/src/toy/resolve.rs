//! Name resolution and frame layout.
//!
//! Every declaration gets its own frame slot, in source order, with
//! parameters first. Slots are never reused inside a function, so deleting
//! a declaration shifts every later local down by one cell. That shift is
//! what lets the memory models expose layout-dependent behavior.

use std::collections::HashMap;

use super::ast::*;
use super::ToyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Builtin {
    /// Next whitespace-separated integer from the input, or -1 at end.
    Input,
    /// Next input byte, or -1 at end.
    GetChar,
}

impl Builtin {
    fn lookup(name: &str) -> Option<Self> {
        match name {
            "input" => Some(Builtin::Input),
            "getchar" => Some(Builtin::GetChar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum RExpr {
    Int(i64),
    Slot(usize),
    Call(usize, Vec<RExpr>),
    Builtin(Builtin),
    Unary(UnaryOp, Box<RExpr>),
    Binary(BinaryOp, Box<RExpr>, Box<RExpr>),
}

#[derive(Debug, Clone)]
pub(crate) enum RPrint {
    Text(String),
    Value(RExpr),
}

#[derive(Debug, Clone)]
pub(crate) struct RStmt {
    pub kind: RStmtKind,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum RStmtKind {
    Assign(usize, RExpr),
    Print(Vec<RPrint>),
    Return(Option<RExpr>),
    If(RExpr, Box<RStmt>, Option<Box<RStmt>>),
    While(RExpr, Box<RStmt>),
    Expr(RExpr),
    Block(Vec<RStmt>),
    Nop,
}

#[derive(Debug, Clone)]
pub(crate) struct RFunction {
    pub name: String,
    pub params: usize,
    pub frame_size: usize,
    pub body: Vec<RStmt>,
}

/// A resolved program, ready for evaluation.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub(crate) functions: Vec<RFunction>,
    pub(crate) main: usize,
}

impl CompiledProgram {
    /// Frame size (slot count) of the named function.
    pub fn frame_size(&self, name: &str) -> Option<usize> {
        self.functions.iter().find(|f| f.name == name).map(|f| f.frame_size)
    }
}

/// Resolves names and lays out frames. With `typed` set, a non-void
/// function whose body can fall off the end is rejected, the way a
/// stack-typed target refuses a branch that leaves nothing on the stack.
pub fn compile(program: &ToyProgram, typed: bool) -> Result<CompiledProgram, ToyError> {
    let mut index = HashMap::new();
    for (i, f) in program.functions.iter().enumerate() {
        if Builtin::lookup(&f.name).is_some() {
            return Err(ToyError::resolve(f.line, format!("'{}' is a builtin", f.name)));
        }
        if index.insert(f.name.as_str(), i).is_some() {
            return Err(ToyError::resolve(f.line, format!("duplicate function '{}'", f.name)));
        }
    }
    let main = *index.get("main").ok_or_else(|| ToyError::resolve(1, "program has no main function"))?;
    if !program.functions[main].params.is_empty() {
        return Err(ToyError::resolve(program.functions[main].line, "main takes no parameters"));
    }

    let arity: Vec<usize> = program.functions.iter().map(|f| f.params.len()).collect();
    let mut functions = Vec::with_capacity(program.functions.len());
    for f in &program.functions {
        if typed && f.ret == ReturnType::Int && f.name != "main" && !always_returns(&f.body) {
            return Err(ToyError::typed(
                f.line,
                format!("function '{}' can reach its end without returning a value", f.name),
            ));
        }
        let mut r = Resolver { index: &index, arity: &arity, scopes: vec![HashMap::new()], next_slot: 0 };
        for p in &f.params {
            r.declare(p, f.line)?;
        }
        let body = r.block(&f.body)?;
        functions.push(RFunction { name: f.name.clone(), params: f.params.len(), frame_size: r.next_slot, body });
    }
    Ok(CompiledProgram { functions, main })
}

fn always_returns(stmts: &[Stmt]) -> bool {
    stmts.iter().any(stmt_always_returns)
}

fn stmt_always_returns(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::Block(inner) => always_returns(inner),
        StmtKind::If(_, then, Some(els)) => stmt_always_returns(then) && stmt_always_returns(els),
        // `while (1)` never falls through.
        StmtKind::While(Expr::Int(v), _) => *v != 0,
        _ => false,
    }
}

struct Resolver<'a> {
    index: &'a HashMap<&'a str, usize>,
    arity: &'a [usize],
    scopes: Vec<HashMap<String, usize>>,
    next_slot: usize,
}

impl Resolver<'_> {
    fn declare(&mut self, name: &str, line: usize) -> Result<usize, ToyError> {
        let scope = self.scopes.last_mut().expect("scope stack never empty");
        if scope.contains_key(name) {
            return Err(ToyError::resolve(line, format!("'{name}' redeclared in the same scope")));
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        scope.insert(name.to_string(), slot);
        Ok(slot)
    }

    fn slot(&self, name: &str, line: usize) -> Result<usize, ToyError> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .ok_or_else(|| ToyError::resolve(line, format!("undeclared variable '{name}'")))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Vec<RStmt>, ToyError> {
        self.scopes.push(HashMap::new());
        let out = stmts.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        out
    }

    /// A branch or loop body that is a single statement still gets its own scope.
    fn scoped(&mut self, s: &Stmt) -> Result<RStmt, ToyError> {
        self.scopes.push(HashMap::new());
        let out = self.stmt(s);
        self.scopes.pop();
        out
    }

    fn stmt(&mut self, s: &Stmt) -> Result<RStmt, ToyError> {
        let line = s.line;
        let kind = match &s.kind {
            StmtKind::Decl(names) => {
                let mut assigns = Vec::new();
                for (name, init) in names {
                    // The initializer sees the outer binding, as in C.
                    let init = init.as_ref().map(|e| self.expr(e, line)).transpose()?;
                    let slot = self.declare(name, line)?;
                    if let Some(e) = init {
                        assigns.push(RStmt { kind: RStmtKind::Assign(slot, e), line });
                    }
                }
                if assigns.is_empty() {
                    RStmtKind::Nop
                } else {
                    RStmtKind::Block(assigns)
                }
            }
            StmtKind::Assign(name, e) => {
                let e = self.expr(e, line)?;
                RStmtKind::Assign(self.slot(name, line)?, e)
            }
            StmtKind::Print(items) => RStmtKind::Print(
                items
                    .iter()
                    .map(|it| match it {
                        PrintItem::Text(t) => Ok(RPrint::Text(t.clone())),
                        PrintItem::Value(e) => Ok(RPrint::Value(self.expr(e, line)?)),
                    })
                    .collect::<Result<_, ToyError>>()?,
            ),
            StmtKind::Return(e) => RStmtKind::Return(e.as_ref().map(|e| self.expr(e, line)).transpose()?),
            StmtKind::If(c, then, els) => RStmtKind::If(
                self.expr(c, line)?,
                Box::new(self.scoped(then)?),
                els.as_ref().map(|e| self.scoped(e).map(Box::new)).transpose()?,
            ),
            StmtKind::While(c, body) => RStmtKind::While(self.expr(c, line)?, Box::new(self.scoped(body)?)),
            StmtKind::Expr(e) => RStmtKind::Expr(self.expr(e, line)?),
            StmtKind::Block(inner) => RStmtKind::Block(self.block(inner)?),
            StmtKind::Empty => RStmtKind::Nop,
        };
        Ok(RStmt { kind, line })
    }

    fn expr(&self, e: &Expr, line: usize) -> Result<RExpr, ToyError> {
        Ok(match e {
            Expr::Int(v) => RExpr::Int(*v),
            Expr::Var(name) => RExpr::Slot(self.slot(name, line)?),
            Expr::Call(name, args) => {
                if let Some(b) = Builtin::lookup(name) {
                    if !args.is_empty() {
                        return Err(ToyError::resolve(line, format!("{name}() takes no arguments")));
                    }
                    RExpr::Builtin(b)
                } else {
                    let idx = *self
                        .index
                        .get(name.as_str())
                        .ok_or_else(|| ToyError::resolve(line, format!("unknown function '{name}'")))?;
                    if self.arity[idx] != args.len() {
                        return Err(ToyError::resolve(
                            line,
                            format!("'{name}' expects {} argument(s), got {}", self.arity[idx], args.len()),
                        ));
                    }
                    RExpr::Call(idx, args.iter().map(|a| self.expr(a, line)).collect::<Result<_, _>>()?)
                }
            }
            Expr::Unary(op, inner) => RExpr::Unary(*op, Box::new(self.expr(inner, line)?)),
            Expr::Binary(op, l, r) => RExpr::Binary(*op, Box::new(self.expr(l, line)?), Box::new(self.expr(r, line)?)),
        })
    }
}
