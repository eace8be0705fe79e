// SPDX-License-Identifier: Apache-2.0

use super::ast::{is_flow_operator, BinOp, Expr, Lambda, Pipeline, Source, Stage, Stmt, UnOp};
use super::lexer::{tokenize, Tok, Token};
use super::{Span, WflError};

/// Top-level statement of a query or REPL chunk.
#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Let(String, Expr),
    Expr(Expr),
}

pub fn parse_program(src: &str) -> Result<Vec<Statement>, WflError> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let mut out = Vec::new();
    loop {
        while p.eat(&Tok::Semi) {}
        if p.at(&Tok::Eof) {
            return Ok(out);
        }
        let s = if p.keyword("let") {
            let name = p.ident()?;
            p.expect(&Tok::Assign)?;
            Statement::Let(name, p.expr()?)
        } else {
            Statement::Expr(p.expr()?)
        };
        out.push(s);
        if !p.at(&Tok::Eof) {
            p.expect(&Tok::Semi)?;
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, WflError> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let e = p.expr()?;
    if !p.at(&Tok::Eof) {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const RESERVED: &[&str] = &["and", "or", "not", "between", "in", "let", "true", "false", "null"];

fn kw(t: &Tok, word: &str) -> bool {
    matches!(t, Tok::Ident(s) if s.eq_ignore_ascii_case(word))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, msg: impl Into<String>) -> WflError {
        let s = self.span();
        let found = match self.peek() {
            Tok::Eof => "end of input".to_string(),
            t => format!("{t:?}"),
        };
        WflError::Syntax { line: s.line, col: s.col, msg: format!("{} (found {found})", msg.into()) }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), WflError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(format!("expected {}", tok_text(t))))
        }
    }

    fn keyword(&mut self, word: &str) -> bool {
        if kw(self.peek(), word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, WflError> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.iter().any(|r| s.eq_ignore_ascii_case(r)) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn expr(&mut self) -> Result<Expr, WflError> {
        self.or()
    }

    fn or(&mut self) -> Result<Expr, WflError> {
        let mut l = self.and()?;
        loop {
            let span = self.span();
            if self.keyword("or") || self.eat(&Tok::OrOr) {
                let r = self.and()?;
                l = Expr::Binary(BinOp::Or, Box::new(l), Box::new(r), span);
            } else {
                return Ok(l);
            }
        }
    }

    fn and(&mut self) -> Result<Expr, WflError> {
        let mut l = self.comparison()?;
        loop {
            let span = self.span();
            if self.keyword("and") || self.eat(&Tok::AndAnd) {
                let r = self.comparison()?;
                l = Expr::Binary(BinOp::And, Box::new(l), Box::new(r), span);
            } else {
                return Ok(l);
            }
        }
    }

    fn comparison(&mut self) -> Result<Expr, WflError> {
        let mut l = self.additive()?;
        loop {
            let span = self.span();
            let op = match self.peek() {
                Tok::EqEq => BinOp::Eq,
                Tok::NotEq => BinOp::Ne,
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                t if kw(t, "between") => {
                    self.bump();
                    let lo = self.additive()?;
                    if !(self.keyword("and") || self.eat(&Tok::AndAnd)) {
                        return Err(self.error("expected 'and' in BETWEEN"));
                    }
                    let hi = self.additive()?;
                    l = Expr::Between(Box::new(l), Box::new(lo), Box::new(hi));
                    continue;
                }
                t if kw(t, "in") => {
                    self.bump();
                    let r = self.additive()?;
                    l = Expr::In(Box::new(l), Box::new(r));
                    continue;
                }
                _ => return Ok(l),
            };
            self.bump();
            let r = self.additive()?;
            l = Expr::Binary(op, Box::new(l), Box::new(r), span);
        }
    }

    fn additive(&mut self) -> Result<Expr, WflError> {
        let mut l = self.multiplicative()?;
        loop {
            let span = self.span();
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.multiplicative()?;
            l = Expr::Binary(op, Box::new(l), Box::new(r), span);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, WflError> {
        let mut l = self.unary()?;
        loop {
            let span = self.span();
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.unary()?;
            l = Expr::Binary(op, Box::new(l), Box::new(r), span);
        }
    }

    fn unary(&mut self) -> Result<Expr, WflError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Bang) || self.keyword("not") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, WflError> {
        let mut e = self.primary()?;
        loop {
            if self.eat(&Tok::Dot) {
                let span = self.span();
                let name = match self.peek().clone() {
                    Tok::Ident(s) => {
                        self.bump();
                        s
                    }
                    _ => return Err(self.error("expected field name after '.'")),
                };
                if !self.at(&Tok::LParen) {
                    e = Expr::Field(Box::new(e), name);
                    continue;
                }
                let args = self.args()?;
                if is_flow_operator(&name) {
                    let mut p = match e {
                        Expr::Pipeline(p) => *p,
                        Expr::Ident(v, s) => Pipeline { source: Source::Var(v), stages: vec![], span: s },
                        _ => {
                            return Err(WflError::Syntax {
                                line: span.line,
                                col: span.col,
                                msg: format!("'{name}' needs a flow on its left"),
                            })
                        }
                    };
                    p.stages.push(Stage { op: name, args, span });
                    e = Expr::Pipeline(Box::new(p));
                } else {
                    match e {
                        Expr::Ident(ns, _) => e = Expr::Call { ns: Some(ns), name, args, span },
                        _ => {
                            return Err(WflError::Syntax {
                                line: span.line,
                                col: span.col,
                                msg: format!("method call '{name}' is not supported"),
                            })
                        }
                    }
                }
            } else if self.at(&Tok::LBracket) {
                self.bump();
                let idx = self.expr()?;
                self.expect(&Tok::RBracket)?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, WflError> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(out);
            }
            self.expect(&Tok::Comma)?;
        }
    }

    fn list(&mut self, close: Tok) -> Result<Vec<Expr>, WflError> {
        let mut out = Vec::new();
        if self.eat(&close) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(&close) {
                return Ok(out);
            }
            self.expect(&Tok::Comma)?;
            if self.eat(&close) {
                return Ok(out);
            }
        }
    }

    fn lambda_body(&mut self) -> Result<Expr, WflError> {
        self.expr()
    }

    fn primary(&mut self) -> Result<Expr, WflError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Int(i))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Float(f))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::LParen => {
                if matches!(self.peek_at(1), Tok::Ident(_))
                    && self.peek_at(2) == &Tok::RParen
                    && self.peek_at(3) == &Tok::Arrow
                {
                    self.bump();
                    let param = self.ident()?;
                    self.bump();
                    self.bump();
                    let body = self.lambda_body()?;
                    return Ok(Expr::Lambda(Box::new(Lambda { param, body })));
                }
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => {
                self.bump();
                Ok(Expr::Array(self.list(Tok::RBracket)?))
            }
            Tok::LBrace => self.brace(),
            Tok::Ident(name) => {
                let lower = name.to_ascii_lowercase();
                match lower.as_str() {
                    "true" => {
                        self.bump();
                        return Ok(Expr::Bool(true));
                    }
                    "false" => {
                        self.bump();
                        return Ok(Expr::Bool(false));
                    }
                    "null" => {
                        self.bump();
                        return Ok(Expr::Null);
                    }
                    "flow" if self.peek_at(1) != &Tok::Arrow => {
                        self.bump();
                        let mut name = None;
                        if self.eat(&Tok::LParen) {
                            match self.peek().clone() {
                                Tok::Str(s) => {
                                    self.bump();
                                    name = Some(s);
                                }
                                _ => return Err(self.error("expected dataset name string")),
                            }
                            self.expect(&Tok::RParen)?;
                        }
                        return Ok(Expr::Pipeline(Box::new(Pipeline {
                            source: Source::Flow(name),
                            stages: vec![],
                            span,
                        })));
                    }
                    "dict" if self.peek_at(1) == &Tok::LBrace => {
                        self.bump();
                        self.bump();
                        let mut kv = Vec::new();
                        if !self.eat(&Tok::RBrace) {
                            loop {
                                let k = self.expr()?;
                                self.expect(&Tok::Colon)?;
                                let v = self.expr()?;
                                kv.push((k, v));
                                if self.eat(&Tok::RBrace) {
                                    break;
                                }
                                self.expect(&Tok::Comma)?;
                                if self.eat(&Tok::RBrace) {
                                    break;
                                }
                            }
                        }
                        return Ok(Expr::DictLit(kv));
                    }
                    "set" if self.peek_at(1) == &Tok::LBracket => {
                        self.bump();
                        self.bump();
                        return Ok(Expr::SetLit(self.list(Tok::RBracket)?));
                    }
                    _ => {}
                }
                let name = self.ident()?;
                if self.eat(&Tok::Arrow) {
                    let body = self.lambda_body()?;
                    return Ok(Expr::Lambda(Box::new(Lambda { param: name, body })));
                }
                if self.at(&Tok::LParen) {
                    let args = self.args()?;
                    return Ok(Expr::Call { ns: None, name, args, span });
                }
                Ok(Expr::Ident(name, span))
            }
            _ => Err(self.error("expected expression")),
        }
    }

    /// `{` starts a record literal when followed by `}` or `name :`, and a
    /// statement block otherwise.
    fn brace(&mut self) -> Result<Expr, WflError> {
        self.expect(&Tok::LBrace)?;
        let is_record = self.at(&Tok::RBrace)
            || (matches!(self.peek(), Tok::Ident(_) | Tok::Str(_)) && self.peek_at(1) == &Tok::Colon);
        if is_record {
            let mut fields: Vec<(String, Expr)> = Vec::new();
            if self.eat(&Tok::RBrace) {
                return Ok(Expr::Record(fields));
            }
            loop {
                let name = match self.bump().tok {
                    Tok::Ident(s) | Tok::Str(s) => s,
                    _ => return Err(self.error("expected field name")),
                };
                self.expect(&Tok::Colon)?;
                let v = self.expr()?;
                if fields.iter().any(|(n, _)| *n == name) {
                    return Err(self.error(format!("duplicate field '{name}' in record")));
                }
                fields.push((name, v));
                if self.eat(&Tok::RBrace) {
                    return Ok(Expr::Record(fields));
                }
                self.expect(&Tok::Comma)?;
                if self.eat(&Tok::RBrace) {
                    return Ok(Expr::Record(fields));
                }
            }
        }
        let mut stmts = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.at(&Tok::Eof) {
                return Err(self.error("expected '}'"));
            }
            if self.keyword("let") {
                let name = self.ident()?;
                self.expect(&Tok::Assign)?;
                stmts.push(Stmt::Let(name, self.expr()?));
            } else {
                stmts.push(Stmt::Expr(self.expr()?));
            }
            if !self.at(&Tok::RBrace) {
                self.expect(&Tok::Semi)?;
            }
        }
        if stmts.is_empty() {
            return Err(self.error("empty block"));
        }
        Ok(Expr::Block(stmts))
    }
}

fn tok_text(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "'('",
        Tok::RParen => "')'",
        Tok::LBrace => "'{'",
        Tok::RBrace => "'}'",
        Tok::LBracket => "'['",
        Tok::RBracket => "']'",
        Tok::Comma => "','",
        Tok::Colon => "':'",
        Tok::Semi => "';'",
        Tok::Assign => "'='",
        Tok::Arrow => "'=>'",
        _ => "token",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_filter_is_one_stage() {
        let e = parse_expr("flow.filter(p => { p.x > 1 })").unwrap();
        let Expr::Pipeline(p) = e else { panic!("not a pipeline") };
        assert_eq!(p.source, Source::Flow(None));
        assert_eq!(p.stages.len(), 1);
        assert_eq!(p.stages[0].op, "filter");
        let Expr::Lambda(l) = &p.stages[0].args[0] else { panic!() };
        assert!(matches!(l.body, Expr::Block(_)));
    }

    #[test]
    fn unbalanced_brace_reports_position() {
        let e = parse_expr("flow.filter(p => { p.x > 1 )").unwrap_err();
        assert!(matches!(e, WflError::Syntax { line: 1, col: 28, .. }), "{e:?}");
    }

    #[test]
    fn record_vs_block() {
        assert!(matches!(parse_expr("{a: 1, b: 2}").unwrap(), Expr::Record(_)));
        assert!(matches!(parse_expr("{}").unwrap(), Expr::Record(_)));
        assert!(matches!(parse_expr("{ let a = 2; a * 3 }").unwrap(), Expr::Block(_)));
        assert!(parse_expr("{a: 1, a: 2}").is_err());
    }

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2 * 3 == 7 and not x or y").unwrap();
        let Expr::Binary(BinOp::Or, l, _, _) = e else { panic!() };
        let Expr::Binary(BinOp::And, l, r, _) = *l else { panic!() };
        assert!(matches!(*r, Expr::Unary(UnOp::Not, _)));
        let Expr::Binary(BinOp::Eq, l, _, _) = *l else { panic!() };
        let Expr::Binary(BinOp::Add, _, r, _) = *l else { panic!() };
        assert!(matches!(*r, Expr::Binary(BinOp::Mul, ..)));
        let e = parse_expr("x BETWEEN 1 AND 2 AND y IN [1]").unwrap();
        assert!(matches!(e, Expr::Binary(BinOp::And, ..)));
    }

    #[test]
    fn namespaced_calls_and_vars() {
        let e = parse_expr("model.apply('m', [1.0])").unwrap();
        assert!(matches!(e, Expr::Call { ns: Some(ref n), .. } if n == "model"));
        let e = parse_expr("x.filter(r => true).collect()").unwrap();
        let Expr::Pipeline(p) = e else { panic!() };
        assert_eq!(p.source, Source::Var("x".into()));
        assert!(parse_expr("p.x.foo(1)").is_err());
    }

    #[test]
    fn programs() {
        let prog = parse_program("let a = 3;; a + 1;;").unwrap();
        assert_eq!(prog.len(), 2);
        assert!(matches!(prog[0], Statement::Let(ref n, _) if n == "a"));
        assert!(parse_program("let = 3").is_err());
    }
}
