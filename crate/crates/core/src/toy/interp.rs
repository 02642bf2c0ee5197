use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::ast::{BinaryOp, UnaryOp};
use super::resolve::{Builtin, CompiledProgram, RExpr, RPrint, RStmt, RStmtKind};
use super::MemoryModel;

/// Resource limits for one toy run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalLimits {
    pub max_steps: u64,
    pub max_depth: usize,
}

impl Default for EvalLimits {
    fn default() -> Self {
        Self { max_steps: 10_000_000, max_depth: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToyStatus {
    Exited(i32),
    Crashed { reason: String, exit_code: i32 },
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyRun {
    pub stdout: String,
    pub status: ToyStatus,
}

/// Exit code reported for a division by zero (128 + SIGFPE).
pub const DIV_ZERO_EXIT: i32 = 136;
/// Exit code reported when the frame limit is exceeded (128 + SIGSEGV).
pub const STACK_OVERFLOW_EXIT: i32 = 139;

pub fn eval_toy(program: &CompiledProgram, model: MemoryModel, input: &str) -> ToyRun {
    eval_toy_with(program, model, input, EvalLimits::default())
}

pub fn eval_toy_with(program: &CompiledProgram, model: MemoryModel, input: &str, limits: EvalLimits) -> ToyRun {
    let mut m = Machine {
        prog: program,
        model,
        rng: match model {
            MemoryModel::Canary(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        },
        stack: Vec::new(),
        base: 0,
        top: 0,
        ret_reg: 0,
        steps: 0,
        depth: 0,
        limits,
        input: input.as_bytes(),
        cursor: 0,
        out: String::new(),
    };
    let status = match m.call(program.main, &[], 0) {
        Ok(_) => ToyStatus::Exited(0),
        Err(Fault::DivZero(line)) => {
            ToyStatus::Crashed { reason: format!("division by zero at line {line}"), exit_code: DIV_ZERO_EXIT }
        }
        Err(Fault::StackOverflow(line)) => {
            ToyStatus::Crashed { reason: format!("stack overflow at line {line}"), exit_code: STACK_OVERFLOW_EXIT }
        }
        Err(Fault::StepLimit) => ToyStatus::StepLimit,
    };
    ToyRun { stdout: m.out, status }
}

enum Fault {
    DivZero(usize),
    StackOverflow(usize),
    StepLimit,
}

enum Flow {
    Next,
    Return,
}

struct Machine<'a> {
    prog: &'a CompiledProgram,
    model: MemoryModel,
    rng: Option<ChaCha8Rng>,
    /// Simulated stack region; frames are laid out contiguously from 0.
    stack: Vec<i64>,
    base: usize,
    top: usize,
    /// Return location. Only the residue model lets it leak between calls.
    ret_reg: i64,
    steps: u64,
    depth: usize,
    limits: EvalLimits,
    input: &'a [u8],
    cursor: usize,
    out: String,
}

impl Machine<'_> {
    fn canary(&mut self) -> i64 {
        self.rng.as_mut().expect("canary model has an rng").next_u64() as i64
    }

    fn call(&mut self, fidx: usize, args: &[i64], line: usize) -> Result<i64, Fault> {
        if self.depth >= self.limits.max_depth {
            return Err(Fault::StackOverflow(line));
        }
        let f = &self.prog.functions[fidx];
        let base = self.top;
        let end = base + f.frame_size;
        if self.stack.len() < end {
            self.stack.resize(end, 0);
        }
        let fallthrough = match self.model {
            MemoryModel::Zero => {
                self.stack[base..end].fill(0);
                Some(0)
            }
            MemoryModel::Canary(_) => {
                for i in base..end {
                    self.stack[i] = self.canary();
                }
                Some(self.canary())
            }
            // Cells keep whatever the previous occupant left behind.
            MemoryModel::Residue => None,
        };
        self.stack[base..base + f.params].copy_from_slice(args);

        let saved_base = self.base;
        self.base = base;
        self.top = end;
        self.depth += 1;
        let flow = self.block(&f.body);
        self.depth -= 1;
        self.top = base;
        self.base = saved_base;

        match flow? {
            Flow::Return => Ok(self.ret_reg),
            Flow::Next => Ok(fallthrough.unwrap_or(self.ret_reg)),
        }
    }

    fn tick(&mut self) -> Result<(), Fault> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            Err(Fault::StepLimit)
        } else {
            Ok(())
        }
    }

    fn block(&mut self, stmts: &[RStmt]) -> Result<Flow, Fault> {
        for s in stmts {
            if let Flow::Return = self.stmt(s)? {
                return Ok(Flow::Return);
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, s: &RStmt) -> Result<Flow, Fault> {
        self.tick()?;
        match &s.kind {
            RStmtKind::Assign(slot, e) => {
                let v = self.expr(e, s.line)?;
                self.stack[self.base + slot] = v;
            }
            RStmtKind::Print(items) => {
                let mut line = String::new();
                for it in items {
                    match it {
                        RPrint::Text(t) => line.push_str(t),
                        RPrint::Value(e) => line.push_str(&self.expr(e, s.line)?.to_string()),
                    }
                }
                self.out.push_str(&line);
                self.out.push('\n');
            }
            RStmtKind::Return(e) => {
                return match e {
                    Some(e) => {
                        self.ret_reg = self.expr(e, s.line)?;
                        Ok(Flow::Return)
                    }
                    // A bare return yields what falling off the end would.
                    None => self.bare_return(),
                };
            }
            RStmtKind::If(c, then, els) => {
                if self.expr(c, s.line)? != 0 {
                    return self.stmt(then);
                } else if let Some(els) = els {
                    return self.stmt(els);
                }
            }
            RStmtKind::While(c, body) => loop {
                self.tick()?;
                if self.expr(c, s.line)? == 0 {
                    break;
                }
                if let Flow::Return = self.stmt(body)? {
                    return Ok(Flow::Return);
                }
            },
            RStmtKind::Expr(e) => {
                self.expr(e, s.line)?;
            }
            RStmtKind::Block(inner) => return self.block(inner),
            RStmtKind::Nop => {}
        }
        Ok(Flow::Next)
    }

    fn bare_return(&mut self) -> Result<Flow, Fault> {
        match self.model {
            MemoryModel::Zero => self.ret_reg = 0,
            MemoryModel::Canary(_) => self.ret_reg = self.canary(),
            MemoryModel::Residue => {}
        }
        Ok(Flow::Return)
    }

    fn expr(&mut self, e: &RExpr, line: usize) -> Result<i64, Fault> {
        Ok(match e {
            RExpr::Int(v) => *v,
            RExpr::Slot(slot) => self.stack[self.base + slot],
            RExpr::Call(fidx, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a, line)?);
                }
                self.call(*fidx, &vals, line)?
            }
            RExpr::Builtin(b) => {
                let v = match b {
                    Builtin::Input => self.read_int(),
                    Builtin::GetChar => self.read_byte(),
                };
                self.ret_reg = v;
                v
            }
            RExpr::Unary(op, inner) => {
                let v = self.expr(inner, line)?;
                match op {
                    UnaryOp::Neg => v.wrapping_neg(),
                    UnaryOp::Not => (v == 0) as i64,
                }
            }
            RExpr::Binary(BinaryOp::And, l, r) => (self.expr(l, line)? != 0 && self.expr(r, line)? != 0) as i64,
            RExpr::Binary(BinaryOp::Or, l, r) => (self.expr(l, line)? != 0 || self.expr(r, line)? != 0) as i64,
            RExpr::Binary(op, l, r) => {
                let a = self.expr(l, line)?;
                let b = self.expr(r, line)?;
                match op {
                    BinaryOp::Add => a.wrapping_add(b),
                    BinaryOp::Sub => a.wrapping_sub(b),
                    BinaryOp::Mul => a.wrapping_mul(b),
                    BinaryOp::Div => {
                        if b == 0 {
                            return Err(Fault::DivZero(line));
                        }
                        a.wrapping_div(b)
                    }
                    BinaryOp::Rem => {
                        if b == 0 {
                            return Err(Fault::DivZero(line));
                        }
                        a.wrapping_rem(b)
                    }
                    BinaryOp::Lt => (a < b) as i64,
                    BinaryOp::Le => (a <= b) as i64,
                    BinaryOp::Gt => (a > b) as i64,
                    BinaryOp::Ge => (a >= b) as i64,
                    BinaryOp::Eq => (a == b) as i64,
                    BinaryOp::Ne => (a != b) as i64,
                    BinaryOp::And | BinaryOp::Or => unreachable!("short-circuit ops handled above"),
                }
            }
        })
    }

    fn read_byte(&mut self) -> i64 {
        match self.input.get(self.cursor) {
            Some(b) => {
                self.cursor += 1;
                *b as i64
            }
            None => -1,
        }
    }

    fn read_int(&mut self) -> i64 {
        while self.cursor < self.input.len() && self.input[self.cursor].is_ascii_whitespace() {
            self.cursor += 1;
        }
        if self.cursor >= self.input.len() {
            return -1;
        }
        let start = self.cursor;
        while self.cursor < self.input.len() && !self.input[self.cursor].is_ascii_whitespace() {
            self.cursor += 1;
        }
        std::str::from_utf8(&self.input[start..self.cursor]).ok().and_then(|s| s.parse().ok()).unwrap_or(0)
    }
}
