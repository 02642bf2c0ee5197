use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ToyError;

/// Parses toy source text. The result is purely syntactic; name resolution
/// happens in [`super::compile`].
pub fn parse_toy(text: &str) -> Result<ToyProgram, ToyError> {
    let tokens = tokenize(text)?;
    let last_line = text.lines().count().max(1);
    let mut p = Parser { tokens, pos: 0, last_line };
    let mut functions = Vec::new();
    while !p.at_end() {
        functions.push(p.function()?);
    }
    Ok(ToyProgram { functions })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    last_line: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.line).unwrap_or(self.last_line)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ToyError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> ToyError {
        match self.peek() {
            Some(t) => ToyError::parse(self.line(), format!("expected {what}, found {t:?}")),
            None => ToyError::parse(self.line(), format!("expected {what}, found end of input")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ToyError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn function(&mut self) -> Result<Function, ToyError> {
        let line = self.line();
        let ret = if self.eat(&Tok::KwInt) {
            ReturnType::Int
        } else if self.eat(&Tok::KwVoid) {
            ReturnType::Void
        } else {
            ReturnType::Implicit
        };
        let name = self.ident("function name")?;
        self.expect(Tok::LParen, "'(' after function name")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                self.expect(Tok::KwInt, "parameter type 'int'")?;
                params.push(self.ident("parameter name")?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "',' or ')'")?;
            }
        }
        self.expect(Tok::LBrace, "'{' to open function body")?;
        let body = self.block_rest()?;
        Ok(Function { name, ret, params, body, line })
    }

    /// Statements up to and including the closing brace.
    fn block_rest(&mut self) -> Result<Vec<Stmt>, ToyError> {
        let mut body = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(body);
                }
                None => return Err(ToyError::parse(self.last_line, "missing '}'")),
                _ => body.push(self.statement()?),
            }
        }
    }

    fn statement(&mut self) -> Result<Stmt, ToyError> {
        let line = self.line();
        let kind = match self.peek() {
            Some(Tok::KwInt) => {
                self.pos += 1;
                let mut names = Vec::new();
                loop {
                    let name = self.ident("variable name")?;
                    let init = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
                    names.push((name, init));
                    if self.eat(&Tok::Semi) {
                        break;
                    }
                    self.expect(Tok::Comma, "',' or ';' in declaration")?;
                }
                StmtKind::Decl(names)
            }
            Some(Tok::KwPrint) => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    if let Some(Tok::Str(s)) = self.peek() {
                        items.push(PrintItem::Text(s.clone()));
                        self.pos += 1;
                    } else {
                        items.push(PrintItem::Value(self.expr()?));
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                // The terminating semicolon is optional after print.
                self.eat(&Tok::Semi);
                StmtKind::Print(items)
            }
            Some(Tok::KwReturn) => {
                self.pos += 1;
                if self.eat(&Tok::Semi) {
                    StmtKind::Return(None)
                } else {
                    let e = self.expr()?;
                    self.expect(Tok::Semi, "';' after return value")?;
                    StmtKind::Return(Some(e))
                }
            }
            Some(Tok::KwIf) => {
                self.pos += 1;
                self.expect(Tok::LParen, "'(' after if")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "')' after condition")?;
                let then = Box::new(self.statement()?);
                let els = if self.eat(&Tok::KwElse) { Some(Box::new(self.statement()?)) } else { None };
                StmtKind::If(cond, then, els)
            }
            Some(Tok::KwWhile) => {
                self.pos += 1;
                self.expect(Tok::LParen, "'(' after while")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "')' after condition")?;
                StmtKind::While(cond, Box::new(self.statement()?))
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                StmtKind::Block(self.block_rest()?)
            }
            Some(Tok::Semi) => {
                self.pos += 1;
                StmtKind::Empty
            }
            Some(Tok::Ident(_)) if self.peek_at(1) == Some(&Tok::Assign) => {
                let name = self.ident("variable name")?;
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::Semi, "';' after assignment")?;
                StmtKind::Assign(name, e)
            }
            Some(Tok::KwElse) => return Err(ToyError::parse(line, "'else' without 'if'")),
            Some(_) => {
                let e = self.expr()?;
                self.expect(Tok::Semi, "';' after expression")?;
                StmtKind::Expr(e)
            }
            None => return Err(self.unexpected("statement")),
        };
        Ok(Stmt { kind, line })
    }

    fn expr(&mut self) -> Result<Expr, ToyError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ToyError> {
        const LEVELS: &[&[(Tok, BinaryOp)]] = &[
            &[(Tok::OrOr, BinaryOp::Or)],
            &[(Tok::AndAnd, BinaryOp::And)],
            &[(Tok::EqEq, BinaryOp::Eq), (Tok::NotEq, BinaryOp::Ne)],
            &[(Tok::Lt, BinaryOp::Lt), (Tok::Le, BinaryOp::Le), (Tok::Gt, BinaryOp::Gt), (Tok::Ge, BinaryOp::Ge)],
            &[(Tok::Plus, BinaryOp::Add), (Tok::Minus, BinaryOp::Sub)],
            &[(Tok::Star, BinaryOp::Mul), (Tok::Slash, BinaryOp::Div), (Tok::Percent, BinaryOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        'outer: loop {
            for (tok, op) in LEVELS[level] {
                if self.eat(tok) {
                    let rhs = self.binary(level + 1)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ToyError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Bang) {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ToyError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident("identifier")?;
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(Tok::Comma, "',' or ')' in call")?;
                        }
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ => {
                let err = self.unexpected("expression");
                self.bump();
                Err(err)
            }
        }
    }
}
