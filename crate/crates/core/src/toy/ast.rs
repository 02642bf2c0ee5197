/// Declared result of a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnType {
    Int,
    Void,
    /// Old-style `main() { ... }` with no type keyword.
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub ret: ReturnType,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: usize,
}

/// A parsed toy program: a flat list of functions, one of which is `main`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyProgram {
    pub functions: Vec<Function>,
}

impl ToyProgram {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Number of statements, counting nested ones and block statements.
    pub fn statement_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| {
                    1 + match &s.kind {
                        StmtKind::If(_, then, els) => {
                            count(std::slice::from_ref(then))
                                + els.as_deref().map_or(0, |e| count(std::slice::from_ref(e)))
                        }
                        StmtKind::While(_, body) => count(std::slice::from_ref(body)),
                        StmtKind::Block(inner) => count(inner),
                        _ => 0,
                    }
                })
                .sum()
        }
        self.functions.iter().map(|f| count(&f.body)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Decl(Vec<(String, Option<Expr>)>),
    Assign(String, Expr),
    Print(Vec<PrintItem>),
    Return(Option<Expr>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    While(Expr, Box<Stmt>),
    Expr(Expr),
    Block(Vec<Stmt>),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrintItem {
    Text(String),
    Value(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Var(String),
    Call(String, Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}
